#include "mvprof/gradsuite.hpp"

#include <cmath>
#include <functional>

#include "mvprof/fusion.hpp"
#include "mvprof/lm.hpp"
#include "mvprof/rng.hpp"
#include "mvprof/tensor.hpp"

namespace mvprof {

namespace {

int dim_between(Rng& rng, int lo, int hi) {
    return lo + int(rng.below(std::uint64_t(hi - lo + 1)));
}

// Random probe tensor used to turn vector outputs into a scalar loss with
// O(1) gradients everywhere.
Tensor probe(const Shape& shape, Rng& rng) {
    return Tensor::randn(shape, rng, 1.0);
}

// Losses are scaled down so that the absolute rounding noise of the central
// difference (~eps*|f|/2h) stays below the 1e-8 relative-error floor even for
// components whose true gradient is tiny. The scaling is exact for both the
// analytic and the numeric side, so genuine backward bugs keep their full
// relative size.
constexpr double kLossScale = 1e-5;

Tensor weighted(const Tensor& out, const Tensor& w) {
    return affine_scalar(sum_all(mul(out, w)), kLossScale, 0.0);
}

struct Case {
    std::string name;
    // Builds params + a loss closure for one random instance.
    std::function<GradcheckReport(Rng&)> run;
};

GradcheckReport check(const std::function<Tensor()>& fn, ParamList params) {
    return gradcheck(fn, params, 1e-6);
}

// Blocks are checked at a generic point in parameter space: the fresh init
// sits on special manifolds (zero adapters, zero biases feeding a
// scale-invariant norm) where some gradients vanish identically.
void jitter_params(const ParamList& params, Rng& rng, double stddev = 0.25) {
    for (const Param& p : params) {
        double* x = p.tensor->data();
        for (int i = 0; i < p.tensor->size(); ++i)
            x[i] += stddev * rng.next_gaussian();
    }
}

std::vector<Case> op_cases() {
    std::vector<Case> cases;

    cases.push_back({"op.matmul", [](Rng& rng) {
        const int m = dim_between(rng, 1, 8), k = dim_between(rng, 1, 8),
                  n = dim_between(rng, 1, 8);
        Tensor a = Tensor::randn({m, k}, rng);
        Tensor b = Tensor::randn({k, n}, rng);
        a.set_requires_grad();
        b.set_requires_grad();
        Tensor w = probe({m, n}, rng);
        return check([&] { return weighted(matmul(a, b), w); },
                     {{"a", &a}, {"b", &b}});
    }});

    cases.push_back({"op.linear", [](Rng& rng) {
        const int r = dim_between(rng, 1, 6), di = dim_between(rng, 1, 8),
                  dout = dim_between(rng, 1, 8);
        Tensor x = Tensor::randn({r, di}, rng);
        Tensor w = Tensor::randn({dout, di}, rng);
        Tensor b = Tensor::randn({dout}, rng);
        x.set_requires_grad();
        w.set_requires_grad();
        b.set_requires_grad();
        Tensor pw = probe({r, dout}, rng);
        return check([&] { return weighted(linear(x, w, &b), pw); },
                     {{"x", &x}, {"w", &w}, {"b", &b}});
    }});

    cases.push_back({"op.transpose", [](Rng& rng) {
        const int m = dim_between(rng, 1, 8), n = dim_between(rng, 1, 8);
        Tensor x = Tensor::randn({m, n}, rng);
        x.set_requires_grad();
        Tensor w = probe({n, m}, rng);
        return check([&] { return weighted(transpose(x), w); }, {{"x", &x}});
    }});

    cases.push_back({"op.add_sub_mul_div", [](Rng& rng) {
        const int m = dim_between(rng, 1, 8), n = dim_between(rng, 1, 8);
        Tensor a = Tensor::randn({m, n}, rng);
        Tensor b = Tensor::randn({m, n}, rng);
        Tensor c = Tensor::randn({m, n}, rng);
        // Keep divisors away from zero.
        double* cd = c.data();
        for (int i = 0; i < c.size(); ++i)
            cd[i] = (cd[i] >= 0 ? 1.0 : -1.0) * (std::fabs(cd[i]) + 0.5);
        a.set_requires_grad();
        b.set_requires_grad();
        c.set_requires_grad();
        Tensor w = probe({m, n}, rng);
        return check(
            [&] {
                return weighted(div(mul(sub(a, b), add(a, b)), c), w);
            },
            {{"a", &a}, {"b", &b}, {"c", &c}});
    }});

    cases.push_back({"op.broadcast_vec", [](Rng& rng) {
        const int m = dim_between(rng, 1, 8), n = dim_between(rng, 1, 8);
        Tensor a = Tensor::randn({m, n}, rng);
        Tensor v = Tensor::randn({n}, rng);
        a.set_requires_grad();
        v.set_requires_grad();
        Tensor w = probe({m, n}, rng);
        return check([&] { return weighted(mul(add(a, v), sub(a, v)), w); },
                     {{"a", &a}, {"v", &v}});
    }});

    cases.push_back({"op.sigmoid", [](Rng& rng) {
        const int n = dim_between(rng, 1, 8);
        Tensor x = Tensor::randn({n}, rng);
        x.set_requires_grad();
        Tensor w = probe({n}, rng);
        return check([&] { return weighted(sigmoid(x), w); }, {{"x", &x}});
    }});

    cases.push_back({"op.gelu", [](Rng& rng) {
        const int n = dim_between(rng, 1, 8);
        Tensor x = Tensor::randn({n}, rng);
        x.set_requires_grad();
        Tensor w = probe({n}, rng);
        return check([&] { return weighted(gelu(x), w); }, {{"x", &x}});
    }});

    cases.push_back({"op.relu", [](Rng& rng) {
        const int n = dim_between(rng, 1, 8);
        Tensor x = Tensor::randn({n}, rng);
        // Keep inputs off the kink so central differences stay valid.
        double* xd = x.data();
        for (int i = 0; i < n; ++i)
            xd[i] = (xd[i] >= 0 ? 1.0 : -1.0) * (std::fabs(xd[i]) + 0.1);
        x.set_requires_grad();
        Tensor w = probe({n}, rng);
        return check([&] { return weighted(relu(x), w); }, {{"x", &x}});
    }});

    cases.push_back({"op.softplus", [](Rng& rng) {
        const int n = dim_between(rng, 1, 8);
        Tensor x = Tensor::randn({n}, rng);
        x.set_requires_grad();
        Tensor w = probe({n}, rng);
        return check([&] { return weighted(softplus(x), w); }, {{"x", &x}});
    }});

    cases.push_back({"op.softmax", [](Rng& rng) {
        const int m = dim_between(rng, 1, 8), n = dim_between(rng, 2, 8);
        Tensor x = Tensor::randn({m, n}, rng);
        x.set_requires_grad();
        Tensor w = probe({m, n}, rng);
        return check([&] { return weighted(softmax_lastdim(x), w); },
                     {{"x", &x}});
    }});

    cases.push_back({"op.layer_norm", [](Rng& rng) {
        const int m = dim_between(rng, 1, 8), d = dim_between(rng, 2, 8);
        Tensor x = Tensor::randn({m, d}, rng);
        Tensor gain = Tensor::randn({d}, rng, 0.5);
        Tensor bias = Tensor::randn({d}, rng, 0.5);
        x.set_requires_grad();
        gain.set_requires_grad();
        bias.set_requires_grad();
        Tensor w = probe({m, d}, rng);
        return check(
            [&] { return weighted(layer_norm(x, gain, bias, 1e-5), w); },
            {{"x", &x}, {"gain", &gain}, {"bias", &bias}});
    }});

    cases.push_back({"op.mean_axis", [](Rng& rng) {
        const int m = dim_between(rng, 1, 8), n = dim_between(rng, 1, 8);
        Tensor x = Tensor::randn({m, n}, rng);
        x.set_requires_grad();
        Tensor w0 = probe({n}, rng);
        Tensor w1 = probe({m}, rng);
        return check(
            [&] {
                return add(weighted(mean_axis(x, 0), w0),
                           weighted(mean_axis(x, 1), w1));
            },
            {{"x", &x}});
    }});

    cases.push_back({"op.concat_slice", [](Rng& rng) {
        const int m = dim_between(rng, 2, 6), n = dim_between(rng, 2, 6);
        Tensor a = Tensor::randn({m, n}, rng);
        Tensor b = Tensor::randn({m, n}, rng);
        a.set_requires_grad();
        b.set_requires_grad();
        Tensor wr = probe({1, n}, rng);
        Tensor wc = probe({2 * m, 1}, rng);
        return check(
            [&] {
                Tensor rows = concat_rows({a, b});   // [2m, n]
                Tensor cols = concat_cols({rows, rows}); // [2m, 2n]
                Tensor sr = slice_rows(rows, m / 2, 1);
                Tensor sc = slice_cols(cols, n / 2, 1);
                return add(weighted(sr, wr), weighted(sc, wc));
            },
            {{"a", &a}, {"b", &b}});
    }});

    cases.push_back({"op.gather_scale_rows", [](Rng& rng) {
        const int v = dim_between(rng, 2, 8), d = dim_between(rng, 1, 8);
        Tensor table = Tensor::randn({v, d}, rng);
        table.set_requires_grad();
        std::vector<int> ids;
        const int l = dim_between(rng, 1, 8);
        for (int i = 0; i < l; ++i)
            ids.push_back(int(rng.below(std::uint64_t(v))));
        Tensor s = Tensor::randn({l}, rng);
        s.set_requires_grad();
        Tensor w = probe({l, d}, rng);
        return check(
            [&] { return weighted(scale_rows(gather_rows(table, ids), s), w); },
            {{"table", &table}, {"s", &s}});
    }});

    cases.push_back({"op.cross_entropy", [](Rng& rng) {
        const int b = dim_between(rng, 1, 8), c = dim_between(rng, 2, 8);
        Tensor logits = Tensor::randn({b, c}, rng);
        logits.set_requires_grad();
        std::vector<int> targets;
        for (int i = 0; i < b; ++i)
            targets.push_back(int(rng.below(std::uint64_t(c))));
        return check(
            [&] {
                return affine_scalar(cross_entropy(logits, targets),
                                     kLossScale, 0.0);
            },
            {{"logits", &logits}});
    }});

    cases.push_back({"op.reshape_sum", [](Rng& rng) {
        const int m = dim_between(rng, 1, 6), n = dim_between(rng, 1, 6);
        Tensor x = Tensor::randn({m, n}, rng);
        x.set_requires_grad();
        Tensor w = probe({m * n}, rng);
        return check(
            [&] {
                Tensor flat = reshape(x, {m * n});
                return add(weighted(flat, w),
                           affine_scalar(sum_all(x), 0.5 * kLossScale, 0.0));
            },
            {{"x", &x}});
    }});

    return cases;
}

GradcheckReport lora_instance(Rng& rng) {
    const int d_in = dim_between(rng, 2, 8), d_out = dim_between(rng, 2, 8);
    const int rank = dim_between(rng, 1, 3);
    LoraLinear layer(d_out, d_in, rank, 2.0 * rank, /*base_trainable=*/false,
                     rng);
    // Push B off its zero init so its gradient pathway is generic.
    Tensor b_init = Tensor::randn({d_out, rank}, rng, 0.3);
    std::copy_n(b_init.data(), std::size_t(b_init.size()), layer.b.data());
    Tensor x = Tensor::randn({dim_between(rng, 1, 4), d_in}, rng);
    Tensor w = probe({x.shape()[0], d_out}, rng);
    ParamList params;
    layer.collect(params, "lora", /*trainable_only=*/true);
    return check([&] { return weighted(layer.forward(x), w); }, params);
}

GradcheckReport fusion_instance(Rng& rng) {
    FusionConfig cfg;
    cfg.feature_dim = 8;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.lora_rank = 2;
    cfg.lora_alpha = 4.0;
    CrossViewFusionBlock block(cfg, rng);
    const int v = dim_between(rng, 1, 4);
    Tensor views = Tensor::randn({v, cfg.feature_dim}, rng);
    Tensor w = probe({cfg.feature_dim}, rng);
    ParamList params;
    block.collect(params, "fusion", /*trainable_only=*/true);
    jitter_params(params, rng);
    return check([&] { return weighted(block.fuse(views), w); }, params);
}

GradcheckReport agp_instance(Rng& rng) {
    AgpConfig cfg;
    cfg.feature_dim = 8;
    cfg.lm_dim = 8;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.lora_rank = 2;
    cfg.lora_alpha = 4.0;
    AgpBlock block(cfg, rng);
    const int v = dim_between(rng, 1, 3);
    const int t = dim_between(rng, 1, 3);
    Tensor bundle = Tensor::randn({v, t, cfg.feature_dim}, rng);
    Tensor w = probe({t, cfg.lm_dim}, rng);
    ParamList params;
    block.collect(params, "agp", /*trainable_only=*/true);
    jitter_params(params, rng);
    return check([&] { return weighted(block.project(bundle), w); }, params);
}

GradcheckReport decoder_instance(Rng& rng) {
    DecoderConfig cfg;
    cfg.vocab_size = 12;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.layers = 2;
    cfg.ffn_mult = 2;
    cfg.max_len = 16;
    TinyDecoder model(cfg, rng);
    SequencePlan plan;
    plan.ids = {Vocab::kBos, Vocab::kVid, Vocab::kVid, 5, 6, 7, 8, Vocab::kEos};
    plan.video_count = 2;
    plan.response_start = 4;
    plan.loss_mask.assign(plan.ids.size(), false);
    for (std::size_t i = 4; i < plan.ids.size(); ++i)
        plan.loss_mask[i] = true;
    Tensor video = Tensor::randn({2, cfg.dim}, rng);
    video.set_requires_grad(); // stands in for the projector output path
    ParamList params;
    model.collect(params, "decoder", /*trainable_only=*/true);
    jitter_params(params, rng);
    params.push_back({"video_tokens", &video});
    return check(
        [&] {
            return affine_scalar(lm_loss(model.forward(plan, video), plan),
                                 kLossScale, 0.0);
        },
        params);
}

} // namespace

GradSuiteReport run_grad_suites(const std::string& module, std::uint64_t seed,
                                int instances_per_case) {
    GradSuiteReport report;
    Rng rng(seed);

    auto run_case = [&](const std::string& name,
                        const std::function<GradcheckReport(Rng&)>& fn,
                        int instances) {
        GradSuiteLine line;
        line.name = name;
        line.instances = instances;
        for (int i = 0; i < instances; ++i) {
            Rng inst = rng.fork(std::uint64_t(std::hash<std::string>{}(name)) +
                                std::uint64_t(i) * 7919);
            const GradcheckReport r = fn(inst);
            if (r.max_rel_error > line.max_rel_error) {
                line.max_rel_error = r.max_rel_error;
                line.worst_param = r.worst_param;
            }
        }
        report.lines.push_back(line);
        report.max_rel_error = std::max(report.max_rel_error, line.max_rel_error);
        report.total_instances += instances;
    };

    const bool all = module == "all";
    if (all) {
        for (const Case& c : op_cases())
            run_case(c.name, c.run, instances_per_case);
        run_case("block.lora", lora_instance, instances_per_case);
    }
    if (all || module == "fusion")
        run_case("block.cross_view_fusion", fusion_instance, instances_per_case);
    if (all || module == "agp")
        run_case("block.agp", agp_instance, instances_per_case);
    if (all || module == "lm")
        run_case("block.decoder", decoder_instance, instances_per_case);
    if (!all && module != "fusion" && module != "agp" && module != "lm")
        throw ConfigError("gradcheck: unknown module '" + module + "'");
    return report;
}

} // namespace mvprof
