#include "doctest.h"

#include <set>

#include "mvprof/error.hpp"
#include "mvprof/sampler.hpp"

using namespace mvprof;

namespace {

// Checks every FramePlan invariant for a plan built from (f, n_target).
void check_plan_invariants(const FramePlan& plan, int f, int n_target) {
    REQUIRE(int(plan.indices.size()) == n_target);
    int prev = -1;
    for (int idx : plan.indices) {
        CHECK(idx >= 0);
        CHECK(idx < f);
        CHECK(idx >= prev);
        if (f >= n_target)
            CHECK(idx > prev); // strictly increasing when the clip has room
        prev = idx;
    }
    for (int idx : plan.indices) {
        bool covered = false;
        for (const Segment& s : plan.segments)
            covered = covered || (idx >= s.start && idx < s.start + s.duration);
        CHECK(covered);
    }
    for (const Segment& s : plan.segments) {
        CHECK(s.start >= 0);
        CHECK(s.duration >= 1);
        CHECK(s.start + s.duration <= f);
    }
}

} // namespace

TEST_CASE("uniform plan examples") {
    FramePlan p1 = uniform_plan(10, 10);
    for (int i = 0; i < 10; ++i)
        CHECK(p1.indices[std::size_t(i)] == i);

    FramePlan p2 = uniform_plan(9, 3);
    CHECK(p2.indices == std::vector<int>{0, 4, 8});

    // Frozen from the rounding formula round(j*99/6), half away from zero.
    FramePlan p3 = uniform_plan(100, 7);
    CHECK(p3.indices == std::vector<int>{0, 17, 33, 50, 66, 83, 99});

    CHECK(p3.segments.size() == 1);
    CHECK(p3.segments[0].start == 0);
    CHECK(p3.segments[0].duration == 100);

    // Single frame falls on the middle one.
    CHECK(uniform_plan(9, 1).indices == std::vector<int>{4});
}

TEST_CASE("pats trivial full-length case") {
    SamplerConfig cfg{16, 1, 16};
    FramePlan plan = pats_plan(16, cfg);
    for (int i = 0; i < 16; ++i)
        CHECK(plan.indices[std::size_t(i)] == i);
    REQUIRE(plan.segments.size() == 1);
    CHECK(plan.segments[0].start == 0);
    CHECK(plan.segments[0].duration == 16);
}

TEST_CASE("pats hand-executed rule table, F=300") {
    // Rule-by-rule evaluation, done on paper before the implementation:
    //   d_eff = min(50, floor(300/2)) = 50
    //   starts = round(i*250) -> 0, 250
    //   budgets = [4, 4]
    //   offsets = round(j*49/3) -> 0, 16, 33, 49
    SamplerConfig cfg{8, 2, 50};
    FramePlan plan = pats_plan(300, cfg);
    CHECK(plan.indices ==
          std::vector<int>{0, 16, 33, 49, 250, 266, 283, 299});
    REQUIRE(plan.segments.size() == 2);
    CHECK(plan.segments[0].start == 0);
    CHECK(plan.segments[0].duration == 50);
    CHECK(plan.segments[1].start == 250);
    CHECK(plan.segments[1].duration == 50);
}

TEST_CASE("ego operating point is a valid config") {
    SamplerConfig cfg{32, 4, 16};
    cfg.validate();
    FramePlan plan = pats_plan(900, cfg);
    check_plan_invariants(plan, 900, 32);
}

TEST_CASE("config and input validation") {
    CHECK_THROWS_AS(pats_plan(10, SamplerConfig{4, 5, 8}), ConfigError);
    CHECK_THROWS_AS(pats_plan(10, SamplerConfig{4, 2, 0}), ConfigError);
    CHECK_THROWS_AS(pats_plan(10, SamplerConfig{0, 1, 4}), ConfigError);
    CHECK_THROWS_AS(pats_plan(0, SamplerConfig{4, 2, 2}), ConfigError);
    CHECK_THROWS_AS(uniform_plan(0, 4), ConfigError);
    CHECK_THROWS_AS(uniform_plan(4, 0), ConfigError);
}

TEST_CASE("pats invariants over a bounded sweep") {
    for (int f : {1, 2, 3, 5, 9, 16, 17, 31, 64, 100}) {
        for (int n_target : {1, 2, 3, 7, 16, 33}) {
            for (int n_seg : {1, 2, 3, 5, 8}) {
                if (n_seg > n_target)
                    continue;
                for (int d_s : {1, 2, 7, 24}) {
                    SamplerConfig cfg{n_target, n_seg, d_s};
                    FramePlan plan = pats_plan(f, cfg);
                    check_plan_invariants(plan, f, n_target);
                    // Segment disjointness whenever they fit the clip.
                    const int d_eff = std::max(1, std::min(d_s, f / n_seg));
                    if (n_seg * d_eff <= f && !plan.has_duplicates) {
                        for (std::size_t i = 1; i < plan.segments.size(); ++i)
                            CHECK(plan.segments[i - 1].start +
                                      plan.segments[i - 1].duration <=
                                  plan.segments[i].start);
                    }
                }
            }
        }
    }
}

TEST_CASE("degenerate pats(N_s=1, d_s=F) equals uniform") {
    for (int f : {1, 3, 8, 50, 127}) {
        for (int n_target : {1, 2, 5, 16, 200}) {
            SamplerConfig cfg{n_target, 1, f};
            CHECK(pats_plan(f, cfg).indices == uniform_plan(f, n_target).indices);
        }
    }
}

TEST_CASE("duplicates only when the clip is shorter than the budget") {
    FramePlan short_clip = pats_plan(5, SamplerConfig{12, 2, 3});
    CHECK(short_clip.has_duplicates);
    CHECK(int(short_clip.indices.size()) == 12);

    // Budget above segment capacity but within clip length: repaired into
    // dense strictly increasing runs.
    FramePlan repaired = pats_plan(100, SamplerConfig{40, 2, 3});
    CHECK_FALSE(repaired.has_duplicates);
    check_plan_invariants(repaired, 100, 40);
}

TEST_CASE("density report examples") {
    // Uniform over the full clip: coverage (F-1)/F, density N/F.
    FramePlan uni = uniform_plan(300, 8);
    DensityReport ur = density_report(uni);
    CHECK(ur.coverage_fraction == doctest::Approx(299.0 / 300));
    CHECK(ur.within_segment_density == doctest::Approx(8.0 / 300));

    // The F=300 table above: denser within segments by construction.
    FramePlan pats = pats_plan(300, SamplerConfig{8, 2, 50});
    DensityReport pr = density_report(pats);
    CHECK(pr.within_segment_density == doctest::Approx(0.08));
    CHECK(pr.within_segment_density > ur.within_segment_density);
    CHECK(pr.max_gap == 201);

    FramePlan single = uniform_plan(9, 1);
    CHECK(density_report(single).max_gap == 0);
}

TEST_CASE("density dominance for fixed budget when segments underfill the clip") {
    for (int f : {64, 100, 300}) {
        for (int n_target : {4, 8, 16}) {
            for (int n_seg : {2, 4}) {
                if (n_seg > n_target)
                    continue;
                for (int d_s : {2, 5, 11}) {
                    if (d_s * n_seg >= f)
                        continue;
                    SamplerConfig cfg{n_target, n_seg, d_s};
                    const double pats_density =
                        density_report(pats_plan(f, cfg)).within_segment_density;
                    const double uniform_density =
                        density_report(uniform_plan(f, n_target))
                            .within_segment_density;
                    CHECK(pats_density >= uniform_density - 1e-12);
                }
            }
        }
    }
}

TEST_CASE("plan json round trip and text form") {
    FramePlan plan = pats_plan(300, SamplerConfig{8, 2, 50});
    nlohmann::json j = plan.to_json();
    CHECK(j["video_length"] == 300);
    CHECK(j["indices"].size() == 8);
    CHECK(j["segments"][1][0] == 250);
    FramePlan back = FramePlan::from_json(j);
    CHECK(back.indices == plan.indices);
    CHECK(back.video_length == plan.video_length);

    const std::string text = plan.to_text();
    CHECK(text.find("video_length 300") != std::string::npos);
    CHECK(text.find("segment 250 50") != std::string::npos);
    CHECK(text.find("indices 0 16 33 49 250 266 283 299") != std::string::npos);
}

TEST_CASE("pats is a pure function of its inputs") {
    SamplerConfig cfg{16, 8, 2};
    FramePlan a = pats_plan(120, cfg);
    FramePlan b = pats_plan(120, cfg);
    CHECK(a.indices == b.indices);
}
