#include "mvprof/fusion.hpp"

#include <cmath>

namespace mvprof {

namespace {
// softplus(ln(e-1)) == 1, so calibration starts as the identity map.
const double kSigmaRawInit = std::log(std::exp(1.0) - 1.0);
constexpr double kCalibEps = 1e-6;
} // namespace

LinearLayer::LinearLayer(int d_out, int d_in, Rng& rng, bool trainable)
    : w(Tensor::randn({d_out, d_in}, rng, 1.0 / std::sqrt(double(d_in)))),
      b(Tensor({d_out})) {
    if (trainable) {
        w.set_requires_grad();
        b.set_requires_grad();
    }
}

Tensor LinearLayer::forward(const Tensor& x) const { return linear(x, w, &b); }

void LinearLayer::collect(ParamList& out, const std::string& prefix,
                          bool trainable_only) {
    if (!trainable_only || w.requires_grad())
        out.push_back({prefix + ".w", &w});
    if (!trainable_only || b.requires_grad())
        out.push_back({prefix + ".b", &b});
}

LoraLinear::LoraLinear(int d_out, int d_in, int rank_, double alpha_,
                       bool base_trainable, Rng& rng, bool bias)
    : base_w(Tensor::randn({d_out, d_in}, rng, 1.0 / std::sqrt(double(d_in)))),
      rank(rank_), alpha(alpha_) {
    if (rank < 0)
        throw ConfigError("lora: rank must be >= 0");
    if (bias)
        base_b = Tensor({d_out});
    if (base_trainable) {
        base_w.set_requires_grad();
        if (has_bias())
            base_b.set_requires_grad();
    }
    if (rank > 0) {
        a = Tensor::randn({rank, d_in}, rng, 1.0 / std::sqrt(double(d_in)));
        b = Tensor({d_out, rank}); // zero init: fresh adapter is the identity
        a.set_requires_grad();
        b.set_requires_grad();
    }
}

Tensor LoraLinear::forward(const Tensor& x) const {
    Tensor y = linear(x, base_w, has_bias() ? &base_b : nullptr);
    if (rank == 0)
        return y;
    Tensor low = linear(linear(x, a, nullptr), b, nullptr);
    return add(y, affine_scalar(low, alpha / double(rank), 0.0));
}

Tensor lora_forward(const LoraLinear& layer, const Tensor& x) {
    return layer.forward(x);
}

void LoraLinear::collect(ParamList& out, const std::string& prefix,
                         bool trainable_only) {
    if (!trainable_only || base_w.requires_grad())
        out.push_back({prefix + ".base_w", &base_w});
    if (has_bias() && (!trainable_only || base_b.requires_grad()))
        out.push_back({prefix + ".base_b", &base_b});
    if (rank > 0) {
        out.push_back({prefix + ".A", &a});
        out.push_back({prefix + ".B", &b});
    }
}

AttentionParams::AttentionParams(int dim, int heads_, int lora_rank,
                                 double lora_alpha, bool base_trainable,
                                 Rng& rng)
    : q(dim, dim, lora_rank, lora_alpha, base_trainable, rng),
      // No key bias: attention scores are invariant to per-row constant
      // shifts, so it would be a dead parameter.
      k(dim, dim, lora_rank, lora_alpha, base_trainable, rng, /*bias=*/false),
      v(dim, dim, lora_rank, lora_alpha, base_trainable, rng),
      o(dim, dim, lora_rank, lora_alpha, base_trainable, rng), heads(heads_) {
    if (dim % heads_ != 0)
        throw ConfigError("attention: dim " + std::to_string(dim) +
                          " not divisible by heads " + std::to_string(heads_));
}

void AttentionParams::collect(ParamList& out, const std::string& prefix,
                              bool trainable_only) {
    q.collect(out, prefix + ".q", trainable_only);
    k.collect(out, prefix + ".k", trainable_only);
    v.collect(out, prefix + ".v", trainable_only);
    o.collect(out, prefix + ".o", trainable_only);
}

Tensor multihead_attention(const AttentionParams& params, const Tensor& seq,
                           bool causal) {
    if (seq.rank() != 2)
        throw DimError("attention: sequence must be [L, D], got " +
                       shape_str(seq.shape()));
    const int l = seq.shape()[0];
    const int d = seq.shape()[1];
    const int h = params.heads;
    if (d % h != 0)
        throw DimError("attention: D=" + std::to_string(d) +
                       " not divisible by heads=" + std::to_string(h));
    const int dh = d / h;
    const double scale = 1.0 / std::sqrt(double(dh));

    Tensor q = params.q.forward(seq);
    Tensor k = params.k.forward(seq);
    Tensor v = params.v.forward(seq);

    // Finite but far below any real score; exp underflows to exactly 0 after
    // max subtraction, so masked positions cannot leak.
    Tensor mask;
    if (causal) {
        mask = Tensor({l, l});
        double* md = mask.data();
        for (int i = 0; i < l; ++i)
            for (int j = i + 1; j < l; ++j)
                md[std::size_t(i) * l + j] = -1e30;
    }

    std::vector<Tensor> head_outs;
    head_outs.reserve(std::size_t(h));
    for (int head = 0; head < h; ++head) {
        Tensor qh = slice_cols(q, head * dh, dh);
        Tensor kh = slice_cols(k, head * dh, dh);
        Tensor vh = slice_cols(v, head * dh, dh);
        Tensor scores =
            affine_scalar(matmul(qh, transpose(kh)), scale, 0.0);
        if (causal)
            scores = add(scores, mask);
        Tensor weights = softmax_lastdim(scores);
        head_outs.push_back(matmul(weights, vh));
    }
    Tensor merged = h == 1 ? head_outs[0] : concat_cols(head_outs);
    return params.o.forward(merged);
}

void FusionConfig::validate() const {
    if (feature_dim < 1 || heads < 1 || feature_dim % heads != 0)
        throw ConfigError("fusion: feature_dim must be positive and divisible "
                          "by heads");
    if (ffn_mult < 1)
        throw ConfigError("fusion: ffn_mult must be >= 1");
    if (max_views < 1)
        throw ConfigError("fusion: max_views must be >= 1");
}

CrossViewFusionBlock::CrossViewFusionBlock(const FusionConfig& cfg, Rng& rng)
    : cfg_(cfg) {
    cfg.validate();
    const int d = cfg.feature_dim;
    norm_gain = Tensor::full({d}, 1.0);
    norm_bias = Tensor({d});
    norm_gain.set_requires_grad();
    norm_bias.set_requires_grad();
    attn = AttentionParams(d, cfg.heads, cfg.lora_rank, cfg.lora_alpha,
                           cfg.lora_base_trainable, rng);
    view_gate_logits = Tensor({cfg.max_views});
    view_gate_logits.set_requires_grad();
    ffn1 = LinearLayer(d * cfg.ffn_mult, d, rng);
    ffn2 = LinearLayer(d, d * cfg.ffn_mult, rng);
    blend_gate_logits = Tensor({d});
    blend_gate_logits.set_requires_grad();
    calib_mu = Tensor({d});
    calib_sigma_raw = Tensor::full({d}, kSigmaRawInit);
    calib_scale = Tensor::full({d}, 1.0);
    calib_shift = Tensor({d});
    calib_mu.set_requires_grad();
    calib_sigma_raw.set_requires_grad();
    calib_scale.set_requires_grad();
    calib_shift.set_requires_grad();
}

Tensor CrossViewFusionBlock::fuse(const Tensor& views) const {
    if (views.rank() != 2 || views.shape()[1] != cfg_.feature_dim)
        throw DimError("fuse: expected [V, " + std::to_string(cfg_.feature_dim) +
                       "], got " + shape_str(views.shape()));
    const int v = views.shape()[0];
    if (v < 1 || v > cfg_.max_views)
        throw ConfigError("fuse: view count " + std::to_string(v) +
                          " exceeds the gate table (max " +
                          std::to_string(cfg_.max_views) + ")");

    Tensor x = layer_norm(views, norm_gain, norm_bias, kLayerNormEps);
    Tensor attended = multihead_attention(attn, x, false);
    Tensor gates = sigmoid(slice_cols(view_gate_logits, 0, v));
    Tensor gated = scale_rows(attended, gates);
    Tensor fused = mean_axis(gated, 0); // [D]

    Tensor hidden = ffn2.forward(gelu(ffn1.forward(fused)));
    Tensor blend = sigmoid(blend_gate_logits);
    Tensor mixed = add(mul(blend, hidden),
                       mul(affine_scalar(blend, -1.0, 1.0), fused));

    Tensor denom = affine_scalar(softplus(calib_sigma_raw), 1.0, kCalibEps);
    return add(mul(div(sub(mixed, calib_mu), denom), calib_scale), calib_shift);
}

void CrossViewFusionBlock::collect(ParamList& out, const std::string& prefix,
                                   bool trainable_only) {
    out.push_back({prefix + ".norm.gain", &norm_gain});
    out.push_back({prefix + ".norm.bias", &norm_bias});
    attn.collect(out, prefix + ".attn", trainable_only);
    out.push_back({prefix + ".view_gates", &view_gate_logits});
    ffn1.collect(out, prefix + ".ffn1", trainable_only);
    ffn2.collect(out, prefix + ".ffn2", trainable_only);
    out.push_back({prefix + ".blend_gate", &blend_gate_logits});
    out.push_back({prefix + ".calib.mu", &calib_mu});
    out.push_back({prefix + ".calib.sigma_raw", &calib_sigma_raw});
    out.push_back({prefix + ".calib.scale", &calib_scale});
    out.push_back({prefix + ".calib.shift", &calib_shift});
}

void AgpConfig::validate() const {
    if (feature_dim < 1 || heads < 1 || feature_dim % heads != 0)
        throw ConfigError("agp: feature_dim must be positive and divisible by "
                          "heads");
    if (lm_dim < 1)
        throw ConfigError("agp: lm_dim must be >= 1");
    if (ffn_mult < 1)
        throw ConfigError("agp: ffn_mult must be >= 1");
}

AgpBlock::AgpBlock(const AgpConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const int d = cfg.feature_dim;
    norm_gain = Tensor::full({d}, 1.0);
    norm_bias = Tensor({d});
    norm_gain.set_requires_grad();
    norm_bias.set_requires_grad();
    // Frozen bases with trainable adapters: the vision-side attention is
    // adapted, not retrained.
    attn = AttentionParams(d, cfg.heads, cfg.lora_rank, cfg.lora_alpha,
                           /*base_trainable=*/false, rng);
    ffn1 = LinearLayer(d * cfg.ffn_mult, d, rng);
    ffn2 = LinearLayer(d, d * cfg.ffn_mult, rng);
    token_gate = LinearLayer(1, d, rng);
    out_proj = LinearLayer(cfg.lm_dim, d, rng);
    out_norm_gain = Tensor::full({cfg.lm_dim}, 1.0);
    out_norm_bias = Tensor({cfg.lm_dim});
    out_norm_gain.set_requires_grad();
    out_norm_bias.set_requires_grad();
}

Tensor AgpBlock::project(const Tensor& bundle) const {
    if (bundle.rank() != 3 || bundle.shape()[2] != cfg_.feature_dim)
        throw DimError("agp: expected bundle [V, T, " +
                       std::to_string(cfg_.feature_dim) + "], got " +
                       shape_str(bundle.shape()));
    if (bundle.requires_grad())
        throw ContractError("agp: bundle features must be frozen");
    const int v = bundle.shape()[0];
    const int t_count = bundle.shape()[1];
    const int d = cfg_.feature_dim;

    std::vector<Tensor> rows;
    rows.reserve(std::size_t(t_count));
    const double* src = bundle.data();
    for (int t = 0; t < t_count; ++t) {
        Tensor views({v, d});
        double* dst = views.data();
        for (int view = 0; view < v; ++view)
            std::copy_n(src + (std::size_t(view) * t_count + t) * d, d,
                        dst + std::size_t(view) * d);

        Tensor x = layer_norm(views, norm_gain, norm_bias, kLayerNormEps);
        Tensor attended = multihead_attention(attn, x, false);
        Tensor pooled = mean_axis(attended, 0); // [D]
        Tensor refined =
            add(pooled, ffn2.forward(gelu(ffn1.forward(pooled))));
        Tensor gate = sigmoid(token_gate.forward(pooled)); // [1]
        Tensor gated = scale_rows(reshape(refined, {1, d}), gate);
        Tensor projected = out_proj.forward(gated); // [1, D_lm]
        rows.push_back(
            layer_norm(projected, out_norm_gain, out_norm_bias, kLayerNormEps));
    }
    return t_count == 1 ? rows[0] : concat_rows(rows);
}

void AgpBlock::collect(ParamList& out, const std::string& prefix,
                       bool trainable_only) {
    out.push_back({prefix + ".norm.gain", &norm_gain});
    out.push_back({prefix + ".norm.bias", &norm_bias});
    attn.collect(out, prefix + ".attn", trainable_only);
    ffn1.collect(out, prefix + ".ffn1", trainable_only);
    ffn2.collect(out, prefix + ".ffn2", trainable_only);
    token_gate.collect(out, prefix + ".token_gate", trainable_only);
    out_proj.collect(out, prefix + ".out_proj", trainable_only);
    out.push_back({prefix + ".out_norm.gain", &out_norm_gain});
    out.push_back({prefix + ".out_norm.bias", &out_norm_bias});
}

Tensor classify(const LinearLayer& head, const Tensor& fused) {
    return head.forward(fused);
}

int argmax_index(const Tensor& logits) {
    const double* d = logits.data();
    int best = 0;
    for (int i = 1; i < logits.size(); ++i)
        if (d[i] > d[best])
            best = i;
    return best;
}

} // namespace mvprof
