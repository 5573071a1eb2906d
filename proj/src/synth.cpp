#include "mvprof/synth.hpp"

#include <algorithm>
#include <cmath>

#include "mvprof/rng.hpp"

namespace mvprof {

const char* sampler_kind_name(SamplerKind kind) {
    return kind == SamplerKind::Pats ? "pats" : "uniform";
}

SamplerKind sampler_kind_from_name(const std::string& name) {
    if (name == "pats")
        return SamplerKind::Pats;
    if (name == "uniform")
        return SamplerKind::Uniform;
    throw ConfigError("unknown sampler kind '" + name +
                      "' (expected pats|uniform)");
}

void SynthConfig::validate() const {
    if (view_count < 1 || view_count > 5)
        throw ConfigError("synth: view_count must be in [1,5]");
    if (feature_dim < 2)
        throw ConfigError("synth: feature_dim must be >= 2");
    if (class_count != kLabelCount)
        throw ConfigError("synth: class_count is fixed at 4");
    if (video_length < 1)
        throw ConfigError("synth: video_length must be >= 1");
    if (train_samples < 1 || val_samples < 1 || test_samples < 1)
        throw ConfigError("synth: every split needs at least one sample");
    if (noise_std < 0.0)
        throw ConfigError("synth: noise_std must be >= 0");
    int informative = 0;
    for (int v = 0; v < view_count; ++v) {
        if (std::find(uninformative_view_ids.begin(),
                      uninformative_view_ids.end(),
                      v) == uninformative_view_ids.end())
            ++informative;
    }
    for (int id : uninformative_view_ids)
        if (id < 0 || id >= view_count)
            throw ConfigError("synth: uninformative view id " +
                              std::to_string(id) + " out of range");
    if (informative < 1)
        throw ConfigError("synth: at least one view must be informative");
    if (burst_count < 1 || burst_len < 1)
        throw ConfigError("synth: burst_count and burst_len must be >= 1");
    if (burst_count * burst_len > video_length)
        throw ConfigError("synth: bursts do not fit the video length");
    sampler.validate();
}

nlohmann::json SynthConfig::to_json() const {
    return nlohmann::json{
        {"view_count", view_count},
        {"feature_dim", feature_dim},
        {"class_count", class_count},
        {"video_length", video_length},
        {"train_samples", train_samples},
        {"val_samples", val_samples},
        {"test_samples", test_samples},
        {"noise_std", noise_std},
        {"uninformative_view_ids", uninformative_view_ids},
        {"burst_count", burst_count},
        {"burst_len", burst_len},
        {"base_amp", base_amp},
        {"burst_amp", burst_amp},
        {"confuser_amp", confuser_amp},
        {"domain_amp", domain_amp},
        {"sampler",
         {{"kind", sampler_kind_name(sampler_kind)},
          {"n_target", sampler.n_target},
          {"n_segments", sampler.n_segments},
          {"segment_duration", sampler.segment_duration}}},
        {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.view_count = j.value("view_count", c.view_count);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.class_count = j.value("class_count", c.class_count);
    c.video_length = j.value("video_length", c.video_length);
    c.train_samples = j.value("train_samples", c.train_samples);
    c.val_samples = j.value("val_samples", c.val_samples);
    c.test_samples = j.value("test_samples", c.test_samples);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.uninformative_view_ids =
        j.value("uninformative_view_ids", c.uninformative_view_ids);
    c.burst_count = j.value("burst_count", c.burst_count);
    c.burst_len = j.value("burst_len", c.burst_len);
    c.base_amp = j.value("base_amp", c.base_amp);
    c.burst_amp = j.value("burst_amp", c.burst_amp);
    c.confuser_amp = j.value("confuser_amp", c.confuser_amp);
    c.domain_amp = j.value("domain_amp", c.domain_amp);
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        c.sampler_kind =
            sampler_kind_from_name(s.value("kind", std::string("pats")));
        c.sampler.n_target = s.value("n_target", c.sampler.n_target);
        c.sampler.n_segments = s.value("n_segments", c.sampler.n_segments);
        c.sampler.segment_duration =
            s.value("segment_duration", c.sampler.segment_duration);
    }
    c.seed = j.value("seed", c.seed);
    return c;
}

namespace {

// Unit-norm class prototypes, two per view (one per bit value). Drawn from a
// per-view stream so the layout is independent of everything else.
std::vector<std::vector<double>> draw_prototypes(const SynthConfig& cfg,
                                                 const Rng& base) {
    std::vector<std::vector<double>> protos(static_cast<std::size_t>(cfg.view_count) * 2);
    for (int v = 0; v < cfg.view_count; ++v) {
        Rng stream = base.fork(0x9000 + std::uint64_t(v));
        for (int bit = 0; bit < 2; ++bit) {
            std::vector<double> p(static_cast<std::size_t>(cfg.feature_dim));
            double norm2 = 0.0;
            for (double& x : p) {
                x = stream.next_gaussian();
                norm2 += x * x;
            }
            const double inv = 1.0 / std::sqrt(norm2);
            for (double& x : p)
                x *= inv;
            protos[std::size_t(v) * 2 + bit] = std::move(p);
        }
    }
    return protos;
}

// One unit vector per activity domain, shared by all informative views.
std::vector<std::vector<double>> draw_domain_protos(const SynthConfig& cfg,
                                                    const Rng& base) {
    std::vector<std::vector<double>> protos(static_cast<std::size_t>(kDomainCount));
    for (int k = 0; k < kDomainCount; ++k) {
        Rng stream = base.fork(0x9500 + std::uint64_t(k));
        std::vector<double> p(static_cast<std::size_t>(cfg.feature_dim));
        double norm2 = 0.0;
        for (double& x : p) {
            x = stream.next_gaussian();
            norm2 += x * x;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& x : p)
            x *= inv;
        protos[std::size_t(k)] = std::move(p);
    }
    return protos;
}

SynthSample make_sample(const SynthConfig& cfg, const Rng& base, int index,
                        const std::vector<std::vector<double>>& protos,
                        const std::vector<std::vector<double>>& domain_protos,
                        const std::vector<int>& view_bit,
                        const FramePlan& plan) {
    Rng sr = base.fork(std::uint64_t(index));
    const int label = int(sr.below(4));
    const int domain = int(sr.below(kDomainCount));
    const std::uint64_t commentary_seed = sr.next_u64();

    // Stratified burst placement: one burst jittered inside each stratum.
    const int f = cfg.video_length;
    std::vector<std::pair<int, int>> bursts; // [start, end)
    const int stratum = f / cfg.burst_count;
    for (int k = 0; k < cfg.burst_count; ++k) {
        const int lo = k * stratum;
        const int slack = stratum - cfg.burst_len;
        const int start = lo + (slack > 0 ? int(sr.below(std::uint64_t(slack + 1))) : 0);
        bursts.emplace_back(start, start + cfg.burst_len);
    }
    std::vector<bool> in_burst(std::size_t(f), false);
    for (const auto& [b, e] : bursts)
        for (int t = b; t < e && t < f; ++t)
            in_burst[std::size_t(t)] = true;

    // Per-view random phase and amplitude of the alternating component, so
    // aliased contamination has an unlearnable sign and a carrier-like
    // magnitude distribution. Consecutive-frame pairs cancel it exactly.
    std::vector<int> phase(static_cast<std::size_t>(cfg.view_count));
    std::vector<double> alt_amp(static_cast<std::size_t>(cfg.view_count));
    for (int v = 0; v < cfg.view_count; ++v) {
        phase[std::size_t(v)] = int(sr.below(2));
        alt_amp[std::size_t(v)] = cfg.confuser_amp * sr.next_uniform();
    }

    // Full latent sequence [V, F, D] in a fixed draw order, so the latent is
    // identical whichever sampler picks frames from it.
    const int d = cfg.feature_dim;
    std::vector<double> latent(std::size_t(cfg.view_count) * f * d, 0.0);
    for (int v = 0; v < cfg.view_count; ++v) {
        const bool informative = view_bit[std::size_t(v)] >= 0;
        const double* carrier = nullptr;
        const double* confuser = nullptr;
        if (informative) {
            const int bit_index = view_bit[std::size_t(v)];
            const int bit = (label >> bit_index) & 1;
            carrier = protos[std::size_t(v) * 2 + bit].data();
            confuser = protos[std::size_t(v) * 2 + (1 - bit)].data();
        }
        const double* domain_dir = domain_protos[std::size_t(domain)].data();
        for (int t = 0; t < f; ++t) {
            double* row = latent.data() + (std::size_t(v) * f + t) * d;
            // The confuser alternates with frame parity over the whole clip,
            // so any two consecutive frames cancel it exactly; sparse grids
            // alias it instead and keep the contamination.
            const double alt = alt_amp[std::size_t(v)] *
                               (((t + phase[std::size_t(v)]) % 2 == 0) ? 1.0
                                                                       : -1.0);
            for (int j = 0; j < d; ++j) {
                double x = cfg.noise_std * sr.next_gaussian();
                if (informative) {
                    x += cfg.base_amp * carrier[j] +
                         cfg.domain_amp * domain_dir[j] + alt * confuser[j];
                    if (in_burst[std::size_t(t)])
                        x += cfg.burst_amp * carrier[j];
                }
                row[j] = x;
            }
        }
    }

    SynthSample sample;
    sample.label = ProficiencyLabel(label);
    sample.domain_id = domain;
    sample.commentary =
        synth_commentary(sample.label, domain, commentary_seed);
    sample.frame_plan = plan;

    const int tokens = int(plan.indices.size());
    sample.bundle = Tensor({cfg.view_count, tokens, d});
    double* dst = sample.bundle.data();
    for (int v = 0; v < cfg.view_count; ++v)
        for (int k = 0; k < tokens; ++k) {
            const int frame = plan.indices[std::size_t(k)];
            std::copy_n(latent.data() + (std::size_t(v) * f + frame) * d, d,
                        dst + (std::size_t(v) * tokens + k) * d);
        }
    return sample;
}

} // namespace

Dataset generate_dataset(const SynthConfig& config) {
    config.validate();
    Rng base(config.seed);
    const auto protos = draw_prototypes(config, base);
    const auto domain_protos = draw_domain_protos(config, base);

    // Informative views carry label bits round-robin (bit 0, bit 1, bit 0...).
    std::vector<int> view_bit(std::size_t(config.view_count), -1);
    int rank = 0;
    for (int v = 0; v < config.view_count; ++v) {
        const bool uninformative =
            std::find(config.uninformative_view_ids.begin(),
                      config.uninformative_view_ids.end(),
                      v) != config.uninformative_view_ids.end();
        if (!uninformative)
            view_bit[std::size_t(v)] = rank++ % 2;
    }

    const FramePlan plan =
        config.sampler_kind == SamplerKind::Pats
            ? pats_plan(config.video_length, config.sampler)
            : uniform_plan(config.video_length, config.sampler.n_target);

    Dataset ds;
    const int total =
        config.train_samples + config.val_samples + config.test_samples;
    for (int i = 0; i < total; ++i) {
        SynthSample sample =
            make_sample(config, base, i, protos, domain_protos, view_bit, plan);
        if (i < config.train_samples)
            ds.train.push_back(std::move(sample));
        else if (i < config.train_samples + config.val_samples)
            ds.val.push_back(std::move(sample));
        else
            ds.test.push_back(std::move(sample));
    }
    return ds;
}

Tensor mean_pool_views(const Tensor& bundle) {
    if (bundle.rank() != 3)
        throw DimError("mean_pool_views: expected [V, T, D], got " +
                       shape_str(bundle.shape()));
    const int v = bundle.shape()[0], t = bundle.shape()[1], d = bundle.shape()[2];
    Tensor out({v, d});
    const double* src = bundle.data();
    double* dst = out.data();
    for (int view = 0; view < v; ++view)
        for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int k = 0; k < t; ++k)
                s += src[(std::size_t(view) * t + k) * d + j];
            dst[std::size_t(view) * d + j] = s / t;
        }
    return out;
}

} // namespace mvprof
