#pragma once

#include <string>

#include "mvprof/rng.hpp"
#include "mvprof/tensor.hpp"

namespace mvprof {

// Ego-Exo style view budget: one egocentric plus up to four exocentric.
inline constexpr int kMaxViews = 5;

struct LinearLayer {
    Tensor w; // [d_out, d_in]
    Tensor b; // [d_out]

    LinearLayer() = default;
    LinearLayer(int d_out, int d_in, Rng& rng, bool trainable = true);

    Tensor forward(const Tensor& x) const;
    void collect(ParamList& out, const std::string& prefix,
                 bool trainable_only);
};

// Frozen (or optionally trainable) base plus a trainable low-rank correction
// (alpha/rank) * B A. B starts at zero, so a fresh layer is exactly its base.
// rank == 0 degenerates to a plain linear layer.
struct LoraLinear {
    Tensor base_w; // [d_out, d_in]
    Tensor base_b; // [d_out]; empty when the layer is bias-less
    Tensor a;      // [rank, d_in]
    Tensor b;      // [d_out, rank]
    int rank = 0;
    double alpha = 1.0;

    LoraLinear() = default;
    LoraLinear(int d_out, int d_in, int rank, double alpha, bool base_trainable,
               Rng& rng, bool bias = true);

    bool has_bias() const { return base_b.size() > 0; }

    Tensor forward(const Tensor& x) const;
    void collect(ParamList& out, const std::string& prefix,
                 bool trainable_only);
};

Tensor lora_forward(const LoraLinear& layer, const Tensor& x);

struct AttentionParams {
    LoraLinear q, k, v, o;
    int heads = 1;

    AttentionParams() = default;
    AttentionParams(int dim, int heads, int lora_rank, double lora_alpha,
                    bool base_trainable, Rng& rng);
    void collect(ParamList& out, const std::string& prefix,
                 bool trainable_only);
};

// Scaled dot-product attention over seq [L, D] with head split/concat and an
// output projection; scale is 1/sqrt(D/heads). With causal=true position i
// attends only to j <= i.
Tensor multihead_attention(const AttentionParams& params, const Tensor& seq,
                           bool causal);

struct FusionConfig {
    int feature_dim = 32;
    int heads = 4;
    int ffn_mult = 2;
    int lora_rank = 4;
    double lora_alpha = 8.0;
    bool lora_base_trainable = false;
    int max_views = kMaxViews;

    void validate() const;
};

// Pipeline over time-pooled per-view vectors [V, D]:
// view-wise layer norm -> cross-view multi-head attention -> per-view sigmoid
// gates -> mean over views -> FFN -> element-wise gated blend with the
// pre-FFN vector -> self-calibration with learnable feature statistics.
class CrossViewFusionBlock {
public:
    CrossViewFusionBlock(const FusionConfig& cfg, Rng& rng);

    Tensor fuse(const Tensor& views) const; // [V, D] -> [D]
    void collect(ParamList& out, const std::string& prefix,
                 bool trainable_only);
    const FusionConfig& config() const { return cfg_; }

    Tensor norm_gain, norm_bias;
    AttentionParams attn;
    Tensor view_gate_logits; // [max_views]
    LinearLayer ffn1, ffn2;
    Tensor blend_gate_logits; // [D]
    Tensor calib_mu, calib_sigma_raw, calib_scale, calib_shift; // [D] each

private:
    FusionConfig cfg_;
};

struct AgpConfig {
    int feature_dim = 32; // D_vis
    int lm_dim = 32;      // D_lm
    int heads = 4;
    int ffn_mult = 2;
    int lora_rank = 4;
    double lora_alpha = 8.0;

    void validate() const;
};

// Per time step: view-wise layer norm -> cross-view attention -> mean pool ->
// residual FFN refinement -> per-token sigmoid gate -> projection to the
// language-model width -> output layer norm. Attention projections carry
// frozen bases with trainable low-rank adapters.
class AgpBlock {
public:
    AgpBlock(const AgpConfig& cfg, Rng& rng);

    // bundle is [V, T, D_vis] with requires_grad == false (frozen features);
    // returns [T, D_lm].
    Tensor project(const Tensor& bundle) const;
    void collect(ParamList& out, const std::string& prefix,
                 bool trainable_only);
    const AgpConfig& config() const { return cfg_; }

    Tensor norm_gain, norm_bias;
    AttentionParams attn;
    LinearLayer ffn1, ffn2;
    LinearLayer token_gate; // D_vis -> 1
    LinearLayer out_proj;   // D_vis -> D_lm
    Tensor out_norm_gain, out_norm_bias;

private:
    AgpConfig cfg_;
};

// 4-way proficiency head over the fused vector.
Tensor classify(const LinearLayer& head, const Tensor& fused);
int argmax_index(const Tensor& logits);

inline constexpr double kLayerNormEps = 1e-5;

} // namespace mvprof
