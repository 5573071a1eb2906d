#include "mvprof/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mvprof/error.hpp"

namespace mvprof {

long long round_half_away(double x) { return llround(x); }

void SamplerConfig::validate() const {
    if (n_target < 1)
        throw ConfigError("sampler: n_target must be >= 1, got " +
                          std::to_string(n_target));
    if (n_segments < 1)
        throw ConfigError("sampler: n_segments must be >= 1, got " +
                          std::to_string(n_segments));
    if (n_segments > n_target)
        throw ConfigError("sampler: n_segments (" + std::to_string(n_segments) +
                          ") must not exceed n_target (" +
                          std::to_string(n_target) + ")");
    if (segment_duration < 1)
        throw ConfigError("sampler: segment_duration must be >= 1, got " +
                          std::to_string(segment_duration));
}

nlohmann::json FramePlan::to_json() const {
    nlohmann::json segs = nlohmann::json::array();
    for (const Segment& s : segments)
        segs.push_back({s.start, s.duration});
    return nlohmann::json{{"video_length", video_length},
                          {"indices", indices},
                          {"segments", segs}};
}

FramePlan FramePlan::from_json(const nlohmann::json& j) {
    FramePlan plan;
    plan.video_length = j.at("video_length").get<int>();
    plan.indices = j.at("indices").get<std::vector<int>>();
    for (const auto& s : j.at("segments"))
        plan.segments.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
    plan.has_duplicates =
        std::adjacent_find(plan.indices.begin(), plan.indices.end()) !=
        plan.indices.end();
    return plan;
}

std::string FramePlan::to_text() const {
    std::ostringstream os;
    os << "video_length " << video_length << '\n';
    for (const Segment& s : segments)
        os << "segment " << s.start << ' ' << s.duration << '\n';
    os << "indices";
    for (int i : indices)
        os << ' ' << i;
    os << '\n';
    return os.str();
}

namespace {

void check_video_length(int f) {
    if (f < 1)
        throw ConfigError("sampler: video_length must be >= 1, got " +
                          std::to_string(f));
}

// Evenly spaced picks over [0, span-1]; midpoint when count == 1.
std::vector<int> spread(int span, int count) {
    std::vector<int> out;
    out.reserve(std::size_t(count));
    if (count == 1) {
        out.push_back(int(round_half_away((span - 1) / 2.0)));
        return out;
    }
    for (int j = 0; j < count; ++j)
        out.push_back(int(round_half_away(double(j) * (span - 1) / (count - 1))));
    return out;
}

// Nearest strictly increasing assignment within [0, f-1]. Requires
// raw.size() <= f; raw must be sorted.
std::vector<int> repair_strictly_increasing(const std::vector<int>& raw, int f) {
    const int n = int(raw.size());
    std::vector<int> out(static_cast<std::size_t>(n));
    int prev = -1;
    for (int i = 0; i < n; ++i) {
        const int upper = (f - 1) - (n - 1 - i);
        out[std::size_t(i)] = std::min(std::max(raw[std::size_t(i)], prev + 1), upper);
        prev = out[std::size_t(i)];
    }
    return out;
}

} // namespace

FramePlan pats_plan(int video_length, const SamplerConfig& config) {
    config.validate();
    check_video_length(video_length);
    const int f = video_length;
    const int n_seg = config.n_segments;
    const int n_target = config.n_target;

    const int d_eff = std::max(1, std::min(config.segment_duration, f / n_seg));

    std::vector<int> starts(static_cast<std::size_t>(n_seg));
    if (n_seg == 1) {
        starts[0] = (f - d_eff) / 2;
    } else {
        for (int i = 0; i < n_seg; ++i)
            starts[std::size_t(i)] =
                int(round_half_away(double(i) * (f - d_eff) / (n_seg - 1)));
    }

    const int base = n_target / n_seg;
    const int extra = n_target % n_seg;

    FramePlan plan;
    plan.video_length = f;
    std::vector<int> budgets(static_cast<std::size_t>(n_seg));
    for (int i = 0; i < n_seg; ++i) {
        budgets[std::size_t(i)] = base + (i < extra ? 1 : 0);
        const std::vector<int> local = spread(d_eff, budgets[std::size_t(i)]);
        for (int off : local)
            plan.indices.push_back(starts[std::size_t(i)] + off);
        plan.segments.push_back({starts[std::size_t(i)], d_eff});
    }
    std::sort(plan.indices.begin(), plan.indices.end());

    const bool dup = std::adjacent_find(plan.indices.begin(), plan.indices.end()) !=
                     plan.indices.end();
    if (dup && f >= n_target) {
        // The dense per-segment rule ran out of distinct frames (budget above
        // segment capacity) but the clip itself has room. Shift into the
        // nearest strictly increasing assignment and record each segment as
        // the interval covering its run of final indices.
        plan.indices = repair_strictly_increasing(plan.indices, f);
        plan.segments.clear();
        int off = 0;
        for (int i = 0; i < n_seg; ++i) {
            const int b = budgets[std::size_t(i)];
            const int first = plan.indices[std::size_t(off)];
            const int last = plan.indices[std::size_t(off + b - 1)];
            plan.segments.push_back({first, last - first + 1});
            off += b;
        }
        plan.has_duplicates = false;
    } else {
        plan.has_duplicates = dup;
    }
    return plan;
}

FramePlan uniform_plan(int video_length, int n_target) {
    check_video_length(video_length);
    if (n_target < 1)
        throw ConfigError("sampler: n_target must be >= 1, got " +
                          std::to_string(n_target));
    FramePlan plan;
    plan.video_length = video_length;
    plan.indices = spread(video_length, n_target);
    plan.segments.push_back({0, video_length});
    plan.has_duplicates =
        std::adjacent_find(plan.indices.begin(), plan.indices.end()) !=
        plan.indices.end();
    return plan;
}

DensityReport density_report(const FramePlan& plan) {
    if (plan.indices.empty() || plan.video_length < 1 || plan.segments.empty())
        throw ContractError("density_report: empty or invalid plan");
    DensityReport report;
    const int lo = plan.indices.front();
    const int hi = plan.indices.back();
    report.coverage_fraction = double(hi - lo) / plan.video_length;
    for (std::size_t i = 1; i < plan.indices.size(); ++i)
        report.max_gap =
            std::max(report.max_gap, plan.indices[i] - plan.indices[i - 1]);
    double density_sum = 0.0;
    for (const Segment& s : plan.segments) {
        int count = 0;
        for (int idx : plan.indices)
            if (idx >= s.start && idx < s.start + s.duration)
                ++count;
        density_sum += double(count) / s.duration;
    }
    report.within_segment_density = density_sum / double(plan.segments.size());
    return report;
}

} // namespace mvprof
