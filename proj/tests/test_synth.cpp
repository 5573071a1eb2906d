#include "doctest.h"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "mvprof/checkpoint.hpp"
#include "mvprof/fusion.hpp"
#include "mvprof/rng.hpp"
#include "mvprof/synth.hpp"

using namespace mvprof;

namespace {

SynthConfig small_config() {
    SynthConfig cfg;
    cfg.view_count = 2;
    cfg.feature_dim = 16;
    cfg.video_length = 60;
    cfg.train_samples = 96;
    cfg.val_samples = 8;
    cfg.test_samples = 64;
    cfg.noise_std = 0.0;
    cfg.uninformative_view_ids = {};
    cfg.burst_count = 3;
    cfg.burst_len = 6;
    cfg.sampler = SamplerConfig{8, 4, 2};
    cfg.seed = 7;
    return cfg;
}

// Cross-view sum of time-pooled features.
Tensor sum_feature(const SynthSample& sample) {
    const Tensor pooled = mean_pool_views(sample.bundle);
    const int v = pooled.shape()[0], d = pooled.shape()[1];
    Tensor out({d});
    for (int view = 0; view < v; ++view)
        for (int j = 0; j < d; ++j)
            out.data()[j] += pooled.data()[view * d + j];
    return out;
}

// Softmax-regression probe trained on `fit`, scored on `eval`.
double probe_accuracy(const std::vector<SynthSample>& fit,
                      const std::vector<SynthSample>& eval_set, int d,
                      int steps) {
    Rng rng(123);
    Tensor w = Tensor::randn({4, d}, rng, 0.01);
    Tensor b({4});
    w.set_requires_grad();
    b.set_requires_grad();
    ParamList params{{"w", &w}, {"b", &b}};
    OptimizerState opt;
    opt.kind = OptKind::Adam;
    opt.learning_rate = 0.1;

    std::vector<Tensor> feats;
    std::vector<int> labels;
    for (const SynthSample& s : fit) {
        feats.push_back(sum_feature(s));
        labels.push_back(int(s.label));
    }
    for (int step = 0; step < steps; ++step) {
        zero_grads(params);
        Tape tape;
        Tensor total = Tensor::scalar(0.0);
        for (std::size_t i = 0; i < feats.size(); ++i) {
            Tensor logits = reshape(linear(feats[i], w, &b), {1, 4});
            total = add(total, cross_entropy(logits, {labels[i]}));
        }
        Tensor loss = affine_scalar(total, 1.0 / double(feats.size()), 0.0);
        tape.backward(loss);
        optimizer_step(opt, params);
    }
    int correct = 0;
    for (const SynthSample& s : eval_set) {
        Tensor logits = linear(sum_feature(s), w, &b);
        correct += argmax_index(logits) == int(s.label) ? 1 : 0;
    }
    return double(correct) / double(eval_set.size());
}

} // namespace

TEST_CASE("dataset generation is deterministic per seed") {
    const SynthConfig cfg = small_config();
    const Dataset a = generate_dataset(cfg);
    const Dataset b = generate_dataset(cfg);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].label == b.train[i].label);
        CHECK(a.train[i].domain_id == b.train[i].domain_id);
        CHECK(a.train[i].commentary == b.train[i].commentary);
        CHECK(std::memcmp(a.train[i].bundle.data(), b.train[i].bundle.data(),
                          sizeof(double) *
                              std::size_t(a.train[i].bundle.size())) == 0);
    }
}

TEST_CASE("bundle token count equals the frame plan budget") {
    const Dataset ds = generate_dataset(small_config());
    for (const SynthSample& s : ds.train) {
        CHECK(s.bundle.shape()[1] == int(s.frame_plan.indices.size()));
        CHECK(s.bundle.shape()[1] == small_config().token_count());
    }
}

TEST_CASE("noiseless cross-view sum is linearly separable; one view is not") {
    SynthConfig cfg = small_config();
    const Dataset ds = generate_dataset(cfg);
    const double full = probe_accuracy(ds.train, ds.train, cfg.feature_dim, 2000);
    CHECK(full == doctest::Approx(1.0));

    // Only view 0 informative: its single bit caps held-out accuracy at the
    // ambiguous-pair ceiling of one half.
    SynthConfig ablated = small_config();
    ablated.uninformative_view_ids = {1};
    const Dataset ds2 = generate_dataset(ablated);
    const double single =
        probe_accuracy(ds2.train, ds2.test, cfg.feature_dim, 2000);
    CHECK(single <= 0.6);
    CHECK(single >= 0.35);
}

TEST_CASE("swapping the sampler changes bundles, never labels or splits") {
    SynthConfig pats_cfg = small_config();
    SynthConfig uni_cfg = small_config();
    uni_cfg.sampler_kind = SamplerKind::Uniform;

    const Dataset a = generate_dataset(pats_cfg);
    const Dataset b = generate_dataset(uni_cfg);
    REQUIRE(a.train.size() == b.train.size());
    REQUIRE(a.test.size() == b.test.size());

    bool any_bundle_differs = false;
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].label == b.train[i].label);
        CHECK(a.train[i].domain_id == b.train[i].domain_id);
        CHECK(a.train[i].commentary == b.train[i].commentary);
        if (std::memcmp(a.train[i].bundle.data(), b.train[i].bundle.data(),
                        sizeof(double) *
                            std::size_t(a.train[i].bundle.size())) != 0)
            any_bundle_differs = true;
        CHECK(a.train[i].frame_plan.indices != b.train[i].frame_plan.indices);
    }
    CHECK(any_bundle_differs);
}

TEST_CASE("config validation") {
    SynthConfig cfg = small_config();
    cfg.uninformative_view_ids = {0, 1};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = small_config();
    cfg.burst_count = 20;
    cfg.burst_len = 20;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = small_config();
    cfg.class_count = 5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("synth config json round trip") {
    SynthConfig cfg = small_config();
    cfg.sampler_kind = SamplerKind::Uniform;
    cfg.noise_std = 0.77;
    const SynthConfig back = SynthConfig::from_json(cfg.to_json());
    CHECK(back.noise_std == cfg.noise_std);
    CHECK(back.sampler_kind == SamplerKind::Uniform);
    CHECK(back.sampler.n_target == cfg.sampler.n_target);
    CHECK(back.seed == cfg.seed);
    CHECK(back.uninformative_view_ids == cfg.uninformative_view_ids);
}

TEST_CASE("mean_pool_views averages the token axis") {
    Tensor bundle({2, 2, 3}, {1, 2, 3, 5, 6, 7, /*view 1*/ 0, 0, 0, 2, 2, 2});
    Tensor pooled = mean_pool_views(bundle);
    CHECK(pooled.shape() == Shape{2, 3});
    CHECK(pooled.data()[0] == doctest::Approx(3.0));
    CHECK(pooled.data()[4] == doctest::Approx(1.0));
}

TEST_CASE("checkpoint round trip is bit exact") {
    Rng rng(19);
    Tensor w = Tensor::randn({4, 6}, rng);
    Tensor b = Tensor::randn({4}, rng);
    w.set_requires_grad();
    b.set_requires_grad();
    ParamList params{{"layer.w", &w}, {"layer.b", &b}};
    const nlohmann::json config{{"kind", "test"}, {"seed", 5}};
    const std::string path = "test_ckpt.skf";
    save_checkpoint(path, config, params);

    const LoadedCheckpoint ckpt = load_checkpoint(path);
    CHECK(ckpt.config["kind"] == "test");
    REQUIRE(ckpt.entries.size() == 2);
    const Tensor* saved_w = ckpt.find("layer.w");
    REQUIRE(saved_w != nullptr);
    CHECK(saved_w->shape() == w.shape());
    CHECK(std::memcmp(saved_w->data(), w.data(),
                      sizeof(double) * std::size_t(w.size())) == 0);

    // Restore into fresh tensors.
    Tensor w2({4, 6}), b2({4});
    ParamList fresh{{"layer.w", &w2}, {"layer.b", &b2}};
    restore_params(ckpt, fresh);
    CHECK(std::memcmp(w2.data(), w.data(),
                      sizeof(double) * std::size_t(w.size())) == 0);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects corruption") {
    Rng rng(23);
    Tensor w = Tensor::randn({3, 3}, rng);
    w.set_requires_grad();
    ParamList params{{"w", &w}};
    const std::string path = "test_ckpt_bad.skf";
    save_checkpoint(path, nlohmann::json::object(), params);

    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    }

    SUBCASE("truncation names the offset") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), std::streamsize(bytes.size() - 10));
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(path),
                             doctest::Contains("offset"), FormatError);
    }
    SUBCASE("bad magic") {
        bytes[0] = 'X';
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(path),
                             doctest::Contains("magic"), FormatError);
    }
    SUBCASE("version mismatch is rejected, never migrated") {
        bytes[4] = 9;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(path),
                             doctest::Contains("version"), FormatError);
    }
    SUBCASE("missing parameter on restore") {
        const LoadedCheckpoint ckpt = load_checkpoint(path);
        Tensor other({3, 3});
        ParamList wrong{{"nope", &other}};
        CHECK_THROWS_AS(restore_params(ckpt, wrong), FormatError);
    }
    SUBCASE("shape mismatch on restore") {
        const LoadedCheckpoint ckpt = load_checkpoint(path);
        Tensor other({3, 4});
        ParamList wrong{{"w", &other}};
        CHECK_THROWS_AS(restore_params(ckpt, wrong), FormatError);
    }
    std::remove(path.c_str());
}

TEST_CASE("rng fork streams are stable regardless of consumption") {
    Rng a(42);
    Rng b(42);
    (void)b.next_u64();
    (void)b.next_u64();
    Rng fa = a.fork(5);
    Rng fb = b.fork(5);
    for (int i = 0; i < 10; ++i)
        CHECK(fa.next_u64() == fb.next_u64());
}
