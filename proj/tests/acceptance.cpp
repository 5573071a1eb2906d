// Acceptance suite: one pass/fail line per criterion, every threshold pinned
// in code. Exit code 0 iff every criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvprof/checkpoint.hpp"
#include "mvprof/gradsuite.hpp"
#include "mvprof/metrics.hpp"
#include "mvprof/rng.hpp"
#include "mvprof/sampler.hpp"
#include "mvprof/train.hpp"

using namespace mvprof;

namespace {

using Clock = std::chrono::steady_clock;

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define REQUIRE_MSG(cond, msg)                                                 \
    do {                                                                       \
        if (!(cond)) {                                                         \
            std::ostringstream os_;                                            \
            os_ << msg;                                                        \
            throw Failure(os_.str());                                          \
        }                                                                      \
    } while (0)

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MSG(in.good(), "cannot open " << path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunConfig default_cls_config() {
    return RunConfig::load_file(std::string(MVPROF_SOURCE_DIR) +
                                "/configs/default_cls.json");
}

RunConfig default_gen_config() {
    return RunConfig::load_file(std::string(MVPROF_SOURCE_DIR) +
                                "/configs/default_gen.json");
}

// ---- 1. gradient correctness ------------------------------------------------

void criterion_gradients(std::ostringstream& out) {
    const auto start = Clock::now();
    const GradSuiteReport report = run_grad_suites("all", 20240901, 10);
    const double elapsed = seconds_since(start);
    REQUIRE_MSG(report.total_instances >= 100,
                "only " << report.total_instances << " instances");
    REQUIRE_MSG(report.max_rel_error < 1e-5,
                "max relative error " << report.max_rel_error);
    REQUIRE_MSG(elapsed < 60.0, "took " << elapsed << " s");
    out << "max_rel_error " << report.max_rel_error << " over "
        << report.total_instances << " instances in " << elapsed << " s";
}

// ---- 2. LoRA identity --------------------------------------------------------

void criterion_lora(std::ostringstream& out) {
    Rng rng(424242);
    LoraLinear layer(12, 10, 4, 8.0, /*base_trainable=*/false, rng);
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor x = Tensor::randn({3, 10}, rng);
        Tensor adapted = layer.forward(x);
        Tensor base = linear(x, layer.base_w, &layer.base_b);
        REQUIRE_MSG(std::memcmp(adapted.data(), base.data(),
                                sizeof(double) * std::size_t(base.size())) == 0,
                    "fresh adapter output differs from base at trial " << trial);
    }

    // One optimizer step on a nonzero-gradient loss.
    std::vector<double> base_w_before(layer.base_w.data(),
                                      layer.base_w.data() + layer.base_w.size());
    Tensor x = Tensor::randn({4, 10}, rng);
    Tensor probe = Tensor::randn({4, 12}, rng);
    ParamList trainable;
    layer.collect(trainable, "lora", /*trainable_only=*/true);
    zero_grads(trainable);
    Tensor before = layer.forward(x);
    {
        Tape tape;
        Tensor loss = sum_all(mul(layer.forward(x), probe));
        tape.backward(loss);
    }
    double grad_norm = 0.0;
    for (const Param& p : trainable)
        for (int i = 0; i < p.tensor->size(); ++i)
            grad_norm += std::fabs(p.tensor->grad()[i]);
    REQUIRE_MSG(grad_norm > 0.0, "loss gradient vanished");
    OptimizerState opt;
    opt.kind = OptKind::Adam;
    opt.learning_rate = 1e-2;
    optimizer_step(opt, trainable);

    Tensor after = layer.forward(x);
    bool changed = false;
    for (int i = 0; i < after.size(); ++i)
        changed = changed || after.data()[i] != before.data()[i];
    REQUIRE_MSG(changed, "outputs unchanged after an optimizer step");
    REQUIRE_MSG(std::memcmp(base_w_before.data(), layer.base_w.data(),
                            sizeof(double) * base_w_before.size()) == 0,
                "frozen base weight changed");
    out << "identity on 1000 inputs, adapters train, base frozen";
}

// ---- 3. PATS invariant sweep --------------------------------------------------

void criterion_pats(std::ostringstream& out) {
    const auto start = Clock::now();
    long long plans = 0;
    for (int f = 1; f <= 128; ++f) {
        for (int n_target = 1; n_target <= 64; ++n_target) {
            // Degenerate equivalence at N_s = 1, d_s = F.
            const FramePlan deg = pats_plan(f, SamplerConfig{n_target, 1, f});
            const FramePlan uni = uniform_plan(f, n_target);
            REQUIRE_MSG(deg.indices == uni.indices,
                        "degenerate mismatch F=" << f << " N=" << n_target);
            for (int n_seg = 1; n_seg <= 8 && n_seg <= n_target; ++n_seg) {
                for (int d_s = 1; d_s <= 64; ++d_s) {
                    const SamplerConfig cfg{n_target, n_seg, d_s};
                    const FramePlan plan = pats_plan(f, cfg);
                    ++plans;
                    REQUIRE_MSG(int(plan.indices.size()) == n_target,
                                "budget F=" << f << " N=" << n_target
                                            << " S=" << n_seg << " d=" << d_s);
                    int prev = -1;
                    for (int idx : plan.indices) {
                        REQUIRE_MSG(idx >= 0 && idx < f,
                                    "bounds F=" << f << " idx=" << idx);
                        REQUIRE_MSG(idx >= prev, "ordering F=" << f);
                        if (f >= n_target)
                            REQUIRE_MSG(idx > prev,
                                        "not strictly increasing F="
                                            << f << " N=" << n_target
                                            << " S=" << n_seg << " d=" << d_s);
                        prev = idx;
                    }
                    const int d_eff = std::max(1, std::min(d_s, f / n_seg));
                    if (n_seg * d_eff <= f) {
                        for (std::size_t i = 1; i < plan.segments.size(); ++i)
                            REQUIRE_MSG(plan.segments[i - 1].start +
                                                plan.segments[i - 1].duration <=
                                            plan.segments[i].start,
                                        "segment overlap F=" << f
                                            << " N=" << n_target
                                            << " S=" << n_seg << " d=" << d_s);
                    }
                }
            }
        }
    }
    const double elapsed = seconds_since(start);
    REQUIRE_MSG(elapsed < 30.0, "took " << elapsed << " s");
    out << plans << " plans checked in " << elapsed << " s";
}

// ---- 4. metric oracles ---------------------------------------------------------

bool is_subsequence(const std::vector<std::string>& sub,
                    const std::vector<std::string>& seq) {
    std::size_t j = 0;
    for (const std::string& tok : seq)
        if (j < sub.size() && sub[j] == tok)
            ++j;
    return j == sub.size();
}

int brute_force_lcs(const std::vector<std::string>& cand,
                    const std::vector<std::string>& ref) {
    int best = 0;
    for (unsigned mask = 0; mask < (1u << cand.size()); ++mask) {
        std::vector<std::string> sub;
        for (std::size_t i = 0; i < cand.size(); ++i)
            if (mask & (1u << i))
                sub.push_back(cand[i]);
        if (int(sub.size()) > best && is_subsequence(sub, ref))
            best = int(sub.size());
    }
    return best;
}

void criterion_metrics(std::ostringstream& out) {
    Rng rng(8675309);
    int cases = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto draw = [&](int max_len) {
            std::vector<std::string> toks;
            const int len = int(rng.below(std::uint64_t(max_len + 1)));
            for (int i = 0; i < len; ++i)
                toks.push_back(std::string(1, char('a' + rng.below(4))));
            return toks;
        };
        const auto cand = draw(12);
        auto ref = draw(12);
        if (ref.empty())
            ref.push_back("a");
        const int lcs = brute_force_lcs(cand, ref);
        double want = 0.0;
        if (!cand.empty() && lcs > 0) {
            const double p = double(lcs) / double(cand.size());
            const double r = double(lcs) / double(ref.size());
            want = 2 * p * r / (p + r);
        }
        const double got = rouge_l(cand, ref);
        REQUIRE_MSG(std::fabs(got - want) < 1e-12,
                    "rouge mismatch at trial " << trial << ": " << got
                                               << " vs " << want);
        ++cases;
    }

    // Hand-computed METEOR fixtures.
    const double hand =
        meteor_exact({"the", "cat", "sat"}, {"the", "cat", "is", "sad"});
    const double f_mean = (10.0 * (2.0 / 3.0) * 0.5) / (0.5 + 9.0 * (2.0 / 3.0));
    REQUIRE_MSG(std::fabs(hand - f_mean * 0.9375) < 1e-12,
                "meteor fixture: " << hand);
    REQUIRE_MSG(meteor_exact({"x"}, {"y"}) == 0.0, "meteor zero-match");
    const double perfect3 = meteor_exact({"a", "b", "c"}, {"a", "b", "c"});
    REQUIRE_MSG(std::fabs(perfect3 - (1.0 - 0.5 / 27.0)) < 1e-12,
                "meteor perfect-match: " << perfect3);

    // Uniform random 4-class predictions land at the random baseline.
    const int n = 100000;
    std::vector<ProficiencyLabel> preds, golds;
    Rng sim(20260810);
    for (int i = 0; i < n; ++i) {
        golds.push_back(ProficiencyLabel(sim.below(4)));
        preds.push_back(ProficiencyLabel(sim.below(4)));
    }
    const double random_top1 = top1(preds, golds) * 100.0;
    REQUIRE_MSG(std::fabs(random_top1 - 24.9) <= 0.5,
                "random baseline " << random_top1 << "%");
    out << cases << " rouge cases exact; meteor fixtures hold; random top-1 "
        << random_top1 << "%";
}

// ---- 5. discriminative end to end ----------------------------------------------

void criterion_discriminative(std::ostringstream& out) {
    const auto start = Clock::now();
    RunConfig cfg = default_cls_config();
    cfg.out_dir = "acceptance_runs/cls_default";
    const TrainResult result = train_discriminative(cfg);
    REQUIRE_MSG(result.report.top1 >= 0.90,
                "default top-1 " << result.report.top1 << " < 0.90");

    RunConfig ablated = default_cls_config();
    ablated.out_dir = "acceptance_runs/cls_ablated";
    ablated.data.uninformative_view_ids = {1, 2};
    const TrainResult single = train_discriminative(ablated);
    REQUIRE_MSG(single.report.top1 <= 0.60,
                "single-view top-1 " << single.report.top1 << " > 0.60");

    const double elapsed = seconds_since(start);
    REQUIRE_MSG(elapsed < 300.0, "took " << elapsed << " s");
    out << "top1 " << result.report.top1 << " (chance 0.25), single-view "
        << single.report.top1 << ", " << elapsed << " s";
}

// ---- 6. generative end to end ---------------------------------------------------

void criterion_generative(std::ostringstream& out) {
    const auto start = Clock::now();
    RunConfig cfg = default_gen_config();
    cfg.out_dir = "acceptance_runs/gen_default";
    const TrainResult result = train_generative(cfg);
    REQUIRE_MSG(result.report.parse_success_rate >= 0.95,
                "strict parse rate " << result.report.parse_success_rate);
    REQUIRE_MSG(result.report.top1 >= 0.80,
                "generated-label top-1 " << result.report.top1);
    REQUIRE_MSG(result.report.rouge_l >= 0.50,
                "mean ROUGE-L " << result.report.rouge_l);

    // Memorization: 16 samples, loss under 0.05 within 2000 steps, then
    // exact regeneration of every training response.
    RunConfig memo = default_gen_config();
    memo.data.train_samples = 16;
    memo.data.val_samples = 1;
    memo.data.test_samples = 1;
    memo.data.seed = 7;
    const Dataset ds = generate_dataset(memo.data);
    Rng rng = Rng(memo.seed).fork(0xBEEF5);
    GenModel model(memo, rng);
    ParamList trainable = model.params(true);
    OptimizerState opt;
    opt.kind = OptKind::Adam;
    opt.learning_rate = memo.optim.lr;
    int steps = 0;
    int steps_at_floor = -1; // first step with mean loss < 0.05
    double loss_value = 1e9;
    // Train past the 0.05 crossing so greedy regeneration is exact; the
    // criterion's 2000-step bound applies to the crossing itself.
    while (steps < 2000 && loss_value > 0.005) {
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t b = 0; b < ds.train.size(); b += 8) {
            const std::size_t e = std::min(ds.train.size(), b + 8);
            zero_grads(trainable);
            Tape tape;
            Tensor total = Tensor::scalar(0.0);
            for (std::size_t i = b; i < e; ++i) {
                const SynthSample& s = ds.train[i];
                const std::string target =
                    format_target({s.label, s.commentary});
                const Tensor video = model.agp.project(s.bundle);
                const SequencePlan plan = assemble_sequence(
                    model.prompt, video.shape()[0], target, model.vocab,
                    model.decoder.config().max_len);
                total = add(total, lm_loss(lm_forward(model.decoder, plan, video),
                                           plan));
            }
            Tensor loss = affine_scalar(total, 1.0 / double(e - b), 0.0);
            tape.backward(loss);
            optimizer_step(opt, trainable);
            epoch_loss += loss.item();
            ++batches;
            ++steps;
        }
        loss_value = epoch_loss / batches;
        if (steps_at_floor < 0 && loss_value < 0.05)
            steps_at_floor = steps;
    }
    REQUIRE_MSG(steps_at_floor >= 0 && steps_at_floor <= 2000,
                "memorization loss did not reach 0.05 within 2000 steps "
                "(last "
                    << loss_value << ")");
    std::vector<GenRecord> records;
    for (const SynthSample& s : ds.train)
        records.push_back(GenRecord{s.label, s.domain_id, s.commentary,
                                    model.generate(s, memo.model.max_new)});
    const EvalReport memo_report = evaluate_generations(records);
    REQUIRE_MSG(memo_report.parse_success_rate == 1.0,
                "memorization parse rate " << memo_report.parse_success_rate);
    REQUIRE_MSG(memo_report.top1 == 1.0,
                "memorization top-1 " << memo_report.top1);
    REQUIRE_MSG(memo_report.rouge_l >= 0.99,
                "memorization ROUGE-L " << memo_report.rouge_l);

    const double elapsed = seconds_since(start);
    REQUIRE_MSG(elapsed < 600.0, "took " << elapsed << " s");
    out << "parse " << result.report.parse_success_rate << ", top1 "
        << result.report.top1 << ", rouge " << result.report.rouge_l
        << "; memorization under 0.05 at step " << steps_at_floor
        << ", parse/top1/rouge " << memo_report.parse_success_rate << "/"
        << memo_report.top1 << "/" << memo_report.rouge_l << "; " << elapsed
        << " s";
}

// ---- 7. sampler effect ------------------------------------------------------------

void criterion_sampler_effect(std::ostringstream& out) {
    const auto start = Clock::now();
    double pats_sum = 0.0, uniform_sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        RunConfig pats_cfg = default_cls_config();
        pats_cfg.seed = seed;
        pats_cfg.data.seed = seed;
        pats_cfg.out_dir = "acceptance_runs/pats_" + std::to_string(seed);
        pats_sum += train_discriminative(pats_cfg).report.top1;

        RunConfig uni_cfg = default_cls_config();
        uni_cfg.seed = seed;
        uni_cfg.data.seed = seed;
        uni_cfg.data.sampler_kind = SamplerKind::Uniform;
        uni_cfg.out_dir = "acceptance_runs/uniform_" + std::to_string(seed);
        uniform_sum += train_discriminative(uni_cfg).report.top1;
    }
    const double pats_mean = pats_sum / 5.0;
    const double uniform_mean = uniform_sum / 5.0;
    const double gap_points = (pats_mean - uniform_mean) * 100.0;
    REQUIRE_MSG(gap_points >= 3.0, "gap " << gap_points << " points < 3");
    out << "pats " << pats_mean << " vs uniform " << uniform_mean << " (+"
        << gap_points << " points over 5 seeds), " << seconds_since(start)
        << " s";
}

// ---- 8. determinism and persistence --------------------------------------------------

void criterion_determinism(std::ostringstream& out) {
    // Two runs with identical (seed, config) must produce byte-identical
    // artifacts. Reports carry no timing or host state by design.
    RunConfig cfg = default_cls_config();
    cfg.out_dir = "acceptance_runs/det_a";
    const TrainResult a = train_discriminative(cfg);
    cfg.out_dir = "acceptance_runs/det_b";
    const TrainResult b = train_discriminative(cfg);
    REQUIRE_MSG(read_file(a.report_path) == read_file(b.report_path),
                "report files differ across identical runs");

    RunConfig gen_cfg = default_gen_config();
    gen_cfg.data.train_samples = 48;
    gen_cfg.data.val_samples = 8;
    gen_cfg.data.test_samples = 8;
    gen_cfg.optim.epochs = 3;
    gen_cfg.out_dir = "acceptance_runs/det_gen_a";
    const TrainResult ga = train_generative(gen_cfg);
    gen_cfg.out_dir = "acceptance_runs/det_gen_b";
    const TrainResult gb = train_generative(gen_cfg);
    REQUIRE_MSG(read_file(ga.report_path) == read_file(gb.report_path),
                "generative reports differ across identical runs");

    // Checkpoint round trip is bit exact.
    const LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint_path);
    RunConfig rebuilt_cfg = default_cls_config();
    Rng rng = Rng(rebuilt_cfg.seed).fork(0xA11CE);
    ClsModel rebuilt(rebuilt_cfg, rng);
    ParamList params = rebuilt.params(false);
    restore_params(ckpt, params);
    for (const Param& p : params) {
        const Tensor* saved = ckpt.find(p.name);
        REQUIRE_MSG(saved != nullptr, "missing " << p.name);
        REQUIRE_MSG(std::memcmp(saved->data(), p.tensor->data(),
                                sizeof(double) * std::size_t(saved->size())) ==
                        0,
                    "round trip not bit exact for " << p.name);
    }

    // Truncations are rejected, never partially loaded.
    const std::string bytes = read_file(a.checkpoint_path);
    const std::string cut_path = "acceptance_runs/truncated.skf";
    for (std::size_t keep :
         {std::size_t(3), std::size_t(6), bytes.size() / 2, bytes.size() - 5}) {
        std::ofstream cut(cut_path, std::ios::binary | std::ios::trunc);
        cut.write(bytes.data(), std::streamsize(keep));
        cut.close();
        bool rejected = false;
        try {
            (void)load_checkpoint(cut_path);
        } catch (const FormatError&) {
            rejected = true;
        }
        REQUIRE_MSG(rejected, "truncated checkpoint (" << keep
                                                       << " bytes) accepted");
    }

    // The two independently trained checkpoints agree parameter for
    // parameter (config snapshots record their own out_dir, so compare data).
    const LoadedCheckpoint ckpt_b = load_checkpoint(b.checkpoint_path);
    REQUIRE_MSG(ckpt.entries.size() == ckpt_b.entries.size(),
                "checkpoint entry counts differ");
    for (std::size_t i = 0; i < ckpt.entries.size(); ++i) {
        const NamedTensor& ea = ckpt.entries[i];
        const NamedTensor& eb = ckpt_b.entries[i];
        REQUIRE_MSG(ea.name == eb.name, "entry order differs at " << i);
        REQUIRE_MSG(std::memcmp(ea.tensor.data(), eb.tensor.data(),
                                sizeof(double) * std::size_t(ea.tensor.size())) ==
                        0,
                    "parameter " << ea.name << " differs across runs");
    }
    out << "reports byte-identical, parameters bit-identical, round trip "
           "exact, truncations rejected";
}

// ---- 9. parser totality ----------------------------------------------------------------

struct ParseFixture {
    const char* text;
    bool strict_ok;
    std::optional<ProficiencyLabel> strict_label;
    const char* strict_commentary; // nullptr when !strict_ok
    bool lenient_ok;
    std::optional<ProficiencyLabel> lenient_label;
    const char* lenient_commentary;
};

void criterion_parser(std::ostringstream& out) {
    Rng rng(1337);
    for (int trial = 0; trial < 1000000; ++trial) {
        std::string noise;
        const int len = int(rng.below(40));
        for (int i = 0; i < len; ++i)
            noise.push_back(char(rng.below(256)));
        const ParseResult strict = parse_output(noise, false);
        if (!strict.ok) {
            REQUIRE_MSG(!strict.reason.empty(), "missing failure reason");
            (void)parse_output(noise, true);
        }
    }

    using L = ProficiencyLabel;
    const auto N = L::Novice, E = L::EarlyExpert, I = L::IntermediateExpert,
               X = L::LateExpert;
    // Hand-derived from the documented grammar; lenient expectations follow
    // the stated scan rule literally.
    const std::vector<ParseFixture> fixtures = {
        {"Proficiency Level: Novice; Proficiency Commentary: keep going", true,
         N, "keep going", true, N, "keep going"},
        {"Proficiency Level: Early Expert; Proficiency Commentary: ok", true, E,
         "ok", true, E, "ok"},
        {"Proficiency Level: Intermediate Expert; Proficiency Commentary: "
         "solid footwork",
         true, I, "solid footwork", true, I, "solid footwork"},
        {"Proficiency Level: Late Expert; Proficiency Commentary: x", true, X,
         "x", true, X, "x"},
        {"proficiency level: novice; proficiency commentary: lower case", true,
         N, "lower case", true, N, "lower case"},
        {"PROFICIENCY LEVEL: LATE EXPERT; PROFICIENCY COMMENTARY: SHOUTING",
         true, X, "SHOUTING", true, X, "SHOUTING"},
        {"   Proficiency Level:   Intermediate Expert   ;   Proficiency "
         "Commentary:   spaced   ",
         true, I, "spaced", true, I, "spaced"},
        {"proficiency level:  novice ;Proficiency Commentary:ok", true, N, "ok",
         true, N, "ok"},
        {"Proficiency Level: Novice; Proficiency Commentary: with, inner; "
         "marks",
         true, N, "with, inner; marks", true, N, "with, inner; marks"},
        {"Proficiency Level:Novice;Proficiency Commentary:ok", true, N, "ok",
         true, N, "ok"},
        {"Proficiency Level: Novice ; Proficiency Commentary: ok", true, N,
         "ok", true, N, "ok"},
        {"\n\tProficiency Level: Novice; Proficiency Commentary: ok\n", true, N,
         "ok", true, N, "ok"},
        {"Proficiency Level: late expert; Proficiency Commentary: mixed", true,
         X, "mixed", true, X, "mixed"},
        {"Proficiency Level: Novice; proficiency commentary: ci headers", true,
         N, "ci headers", true, N, "ci headers"},
        {"Proficiency Level: Novice; Proficiency Commentary: a; Proficiency "
         "Commentary: b",
         true, N, "a; Proficiency Commentary: b", true, N,
         "a; Proficiency Commentary: b"},
        {"Proficiency Level: Novice; Proficiency Commentary: trailing ws   ",
         true, N, "trailing ws", true, N, "trailing ws"},
        {"Proficiency Level: Late Expert; proficiency commentary:ok", true, X,
         "ok", true, X, "ok"},
        // strict failures rescued (or not) by the lenient scan
        {"Proficiency Level: Novice; Proficiency Commentary:", false,
         std::nullopt, nullptr, true, N, "Proficiency Commentary:"},
        {"Proficiency Level: Novice; Proficiency Commentary:   ", false,
         std::nullopt, nullptr, true, N, "Proficiency Commentary:"},
        {"Proficiency Level: Guru; Proficiency Commentary: x", false,
         std::nullopt, nullptr, false, std::nullopt, nullptr},
        {"Proficiency Level Novice; Proficiency Commentary: x", false,
         std::nullopt, nullptr, true, N, "Proficiency Commentary: x"},
        {"Level Late Expert stuff", false, std::nullopt, nullptr, true, X,
         "stuff"},
        {"The athlete is an Early Expert: work on rhythm", false, std::nullopt,
         nullptr, true, E, "work on rhythm"},
        {"", false, std::nullopt, nullptr, false, std::nullopt, nullptr},
        {"   ", false, std::nullopt, nullptr, false, std::nullopt, nullptr},
        {"Novice", false, std::nullopt, nullptr, false, std::nullopt, nullptr},
        {"Novice: too eager", false, std::nullopt, nullptr, true, N,
         "too eager"},
        {"Proficiency Level: Novice Proficiency Commentary: x", false,
         std::nullopt, nullptr, true, N, "x"},
        {"Proficiency Level: Novice; Commentary: x", false, std::nullopt,
         nullptr, true, N, "Commentary: x"},
        {"xxProficiency Level: Novice; Proficiency Commentary: ok", false,
         std::nullopt, nullptr, true, N, "Proficiency Commentary: ok"},
        {"Proficiency  Level: Novice; Proficiency Commentary: x", false,
         std::nullopt, nullptr, true, N, "Proficiency Commentary: x"},
        {"Proficiency Level: ; Proficiency Commentary: ok", false,
         std::nullopt, nullptr, false, std::nullopt, nullptr},
        {"My Proficiency Level: Intermediate Expert; Proficiency Commentary: "
         "good",
         false, std::nullopt, nullptr, true, I, "Proficiency Commentary: good"},
        {"Early Expert and Late Expert: both mentioned", false, std::nullopt,
         nullptr, true, E, "both mentioned"},
        {"novice early expert intermediate expert", false, std::nullopt,
         nullptr, true, N, "early expert intermediate expert"},
        {"Proficiency Level: NoviceX; Proficiency Commentary: ok", false,
         std::nullopt, nullptr, true, N, "Proficiency Commentary: ok"},
        {"Pr\xc3\xb6"
         "ficiency Level: Novice; Proficiency Commentary: ok",
         false, std::nullopt, nullptr, true, N, "Proficiency Commentary: ok"},
        {"Proficiency Level: Novice", false, std::nullopt, nullptr, false,
         std::nullopt, nullptr},
        {"Proficiency Commentary: no label here", false, std::nullopt, nullptr,
         false, std::nullopt, nullptr},
        {"late expert", false, std::nullopt, nullptr, false, std::nullopt,
         nullptr},
        {"late expert; keep pushing", false, std::nullopt, nullptr, true, X,
         "keep pushing"},
        {"prefix late expert suffix", false, std::nullopt, nullptr, true, X,
         "suffix"},
        {"intermediate expert;", false, std::nullopt, nullptr, false,
         std::nullopt, nullptr},
        {"a:b;c", false, std::nullopt, nullptr, false, std::nullopt, nullptr},
        {";;;;", false, std::nullopt, nullptr, false, std::nullopt, nullptr},
        {"Proficiency Level:; Proficiency Commentary: ok", false, std::nullopt,
         nullptr, false, std::nullopt, nullptr},
        {"Proficiency Level: EarlyExpert; Proficiency Commentary: ok", false,
         std::nullopt, nullptr, false, std::nullopt, nullptr},
        {"Proficiency Level: Early  Expert; Proficiency Commentary: ok", false,
         std::nullopt, nullptr, false, std::nullopt, nullptr},
        {"NOVICE; verdict", false, std::nullopt, nullptr, true, N, "verdict"},
        {"see the Intermediate Expert: nice lines; keep it up", false,
         std::nullopt, nullptr, true, I, "nice lines; keep it up"},
    };
    REQUIRE_MSG(fixtures.size() >= 50,
                "fixture table has only " << fixtures.size() << " cases");

    for (std::size_t i = 0; i < fixtures.size(); ++i) {
        const ParseFixture& fx = fixtures[i];
        const ParseResult strict = parse_output(fx.text, false);
        REQUIRE_MSG(strict.ok == fx.strict_ok,
                    "fixture " << i << " strict ok mismatch: '" << fx.text
                               << "'");
        if (fx.strict_ok) {
            REQUIRE_MSG(strict.value.label == *fx.strict_label,
                        "fixture " << i << " strict label");
            REQUIRE_MSG(strict.value.commentary == fx.strict_commentary,
                        "fixture " << i << " strict commentary: got '"
                                   << strict.value.commentary << "'");
        }
        const ParseResult lenient = parse_output(fx.text, true);
        REQUIRE_MSG(lenient.ok == fx.lenient_ok,
                    "fixture " << i << " lenient ok mismatch: '" << fx.text
                               << "'");
        if (fx.lenient_ok) {
            REQUIRE_MSG(lenient.value.label == *fx.lenient_label,
                        "fixture " << i << " lenient label");
            REQUIRE_MSG(lenient.value.commentary == fx.lenient_commentary,
                        "fixture " << i << " lenient commentary: got '"
                                   << lenient.value.commentary << "'");
        }
    }
    out << "1e6 fuzz inputs, " << fixtures.size() << " fixtures exact";
}

struct Criterion {
    int id;
    const char* name;
    void (*run)(std::ostringstream&);
};

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "gradient correctness", criterion_gradients},
        {2, "lora identity", criterion_lora},
        {3, "pats invariant suite", criterion_pats},
        {4, "metric oracles", criterion_metrics},
        {5, "discriminative end-to-end", criterion_discriminative},
        {6, "generative end-to-end", criterion_generative},
        {7, "sampler-effect analog", criterion_sampler_effect},
        {8, "determinism and persistence", criterion_determinism},
        {9, "parser totality", criterion_parser},
    };
    const int only = argc > 1 ? std::atoi(argv[1]) : 0;
    int failures = 0;
    for (const Criterion& criterion : criteria) {
        if (only != 0 && criterion.id != only)
            continue;
        std::ostringstream detail;
        try {
            criterion.run(detail);
            std::printf("[PASS] %d. %s: %s\n", criterion.id, criterion.name,
                        detail.str().c_str());
        } catch (const std::exception& e) {
            ++failures;
            std::printf("[FAIL] %d. %s: %s\n", criterion.id, criterion.name,
                        e.what());
        }
        std::fflush(stdout);
    }
    if (failures > 0)
        std::printf("%d criterion(s) failed\n", failures);
    return failures > 0 ? 1 : 0;
}
