#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace mvprof {

// Temporal sampling parameters: select n_target frames as n_segments
// densely-sampled segments of (at most) segment_duration frames each.
// Durations are in frames; callers convert from seconds if they care.
struct SamplerConfig {
    int n_target = 16;
    int n_segments = 4;
    int segment_duration = 8;

    void validate() const;
};

struct Segment {
    int start = 0;
    int duration = 0;
};

// Concrete ordered frame selection plus the segment layout it came from.
struct FramePlan {
    std::vector<int> indices;
    std::vector<Segment> segments;
    int video_length = 0;
    bool has_duplicates = false;

    nlohmann::json to_json() const;
    static FramePlan from_json(const nlohmann::json& j);
    std::string to_text() const;
};

// Deterministic segment-based plan:
//   1. d_eff = min(segment_duration, floor(F / n_segments)), at least 1;
//   2. starts spread evenly over [0, F - d_eff] (centered when n_segments=1);
//   3. budget split floor(n/N_s) with the remainder on the earliest segments;
//   4. within a segment, evenly spaced over [0, d_eff-1] (midpoint when the
//      per-segment budget is 1), round half away from zero;
//   5. concatenate and sort. Duplicates are kept only when F < n_target;
//      otherwise they are repaired into the nearest strictly increasing
//      assignment and segments are re-recorded as the covering runs.
FramePlan pats_plan(int video_length, const SamplerConfig& config);

// Even spread of the whole budget over the whole clip; one segment [0, F].
FramePlan uniform_plan(int video_length, int n_target);

struct DensityReport {
    double coverage_fraction = 0.0;
    int max_gap = 0;
    double within_segment_density = 0.0;
};

DensityReport density_report(const FramePlan& plan);

// Round half away from zero, the rounding rule used throughout the sampler.
long long round_half_away(double x);

} // namespace mvprof
