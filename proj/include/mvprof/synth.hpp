#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "mvprof/sampler.hpp"
#include "mvprof/tensor.hpp"
#include "mvprof/textio.hpp"

namespace mvprof {

enum class SamplerKind { Pats, Uniform };

const char* sampler_kind_name(SamplerKind kind);
SamplerKind sampler_kind_from_name(const std::string& name);

// Synthetic multi-view stand-in for frozen backbone features. Each sample is
// a latent frame sequence of length video_length; the configured sampler
// picks token_count frames per view. Labels are two independent bits, one
// carried by each informative view (so single views are ambiguous between
// two classes and only the cross-view combination separates all four). The
// class carrier is weak everywhere (base_amp) and strong inside short bursts
// (burst_amp). A frame-parity alternating component of the opposite-bit
// prototype (confuser_amp) runs over the whole clip: it cancels exactly under
// dense consecutive sampling but contaminates isolated picks. A constant
// per-domain component (domain_amp) makes the activity domain recoverable.
struct SynthConfig {
    int view_count = 3;
    int feature_dim = 32;
    int class_count = 4; // fixed by the label set
    int video_length = 120;
    int train_samples = 192;
    int val_samples = 48;
    int test_samples = 96;
    double noise_std = 0.35;
    std::vector<int> uninformative_view_ids = {2};
    int burst_count = 5;
    int burst_len = 10;
    double base_amp = 0.15;
    double burst_amp = 1.0;
    double confuser_amp = 2.0;
    double domain_amp = 0.5;
    SamplerKind sampler_kind = SamplerKind::Pats;
    SamplerConfig sampler{16, 8, 2};
    std::uint64_t seed = 42;

    int token_count() const { return sampler.n_target; }
    void validate() const;

    nlohmann::json to_json() const;
    static SynthConfig from_json(const nlohmann::json& j);
};

struct SynthSample {
    Tensor bundle; // [V, T, D], requires_grad == false
    ProficiencyLabel label = ProficiencyLabel::Novice;
    int domain_id = 0;
    std::string commentary;
    FramePlan frame_plan;
};

struct Dataset {
    std::vector<SynthSample> train;
    std::vector<SynthSample> val;
    std::vector<SynthSample> test;
};

Dataset generate_dataset(const SynthConfig& config);

// Mean over the token axis: [V, T, D] -> [V, D]. Plain data, no gradient.
Tensor mean_pool_views(const Tensor& bundle);

} // namespace mvprof
