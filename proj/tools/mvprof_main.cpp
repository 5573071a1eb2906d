// mvprof: multi-view proficiency toolkit CLI.
//
// Subcommands:
//   sample     print a frame plan as JSON
//   train-cls  train the discriminative pipeline from a JSON config
//   train-gen  train the generative pipeline from a JSON config
//   eval       evaluate a checkpoint on the config's test split
//   gradcheck  run the finite-difference suites
//
// Exit codes: 0 success, 1 validation/config error, 2 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "mvprof/gradsuite.hpp"
#include "mvprof/sampler.hpp"
#include "mvprof/train.hpp"

namespace {

using namespace mvprof;

RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    for (const std::string& assignment : overrides)
        apply_override(j, assignment);
    return RunConfig::from_json(j);
}

void print_result(const TrainResult& result) {
    std::cout << result.report_json.dump(2) << '\n';
    std::cout << "checkpoint: " << result.checkpoint_path << '\n';
    std::cout << "report:     " << result.report_path << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-view proficiency toolkit"};
    app.require_subcommand(1);

    // sample
    auto* sample = app.add_subcommand("sample", "print a frame plan as JSON");
    int video_length = 0, n_target = 0, n_segments = 1, d_s = 1;
    bool uniform = false;
    sample->add_option("--video-length", video_length, "clip length in frames")
        ->required();
    sample->add_option("--n-target", n_target, "frame budget")->required();
    sample->add_option("--n-segments", n_segments, "segment count");
    sample->add_option("--d-s", d_s, "segment duration in frames");
    sample->add_flag("--uniform", uniform, "use the uniform baseline sampler");

    // train/eval
    std::string config_path, checkpoint_path;
    std::vector<std::string> overrides;
    auto* train_cls =
        app.add_subcommand("train-cls", "train the discriminative pipeline");
    train_cls->add_option("--config", config_path, "JSON config")->required();
    train_cls->add_option("--set", overrides, "dotted key=value override");

    auto* train_gen =
        app.add_subcommand("train-gen", "train the generative pipeline");
    train_gen->add_option("--config", config_path, "JSON config")->required();
    train_gen->add_option("--set", overrides, "dotted key=value override");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")
        ->required();
    eval->add_option("--config", config_path, "JSON config")->required();
    eval->add_option("--set", overrides, "dotted key=value override");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference suites");
    std::string module = "all";
    gc->add_option("--module", module, "all|fusion|agp|lm")
        ->check(CLI::IsMember({"all", "fusion", "agp", "lm"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*sample) {
            FramePlan plan;
            if (uniform) {
                plan = uniform_plan(video_length, n_target);
            } else {
                SamplerConfig cfg{n_target, n_segments, d_s};
                plan = pats_plan(video_length, cfg);
            }
            std::cout << plan.to_json().dump(2) << '\n';
        } else if (*train_cls) {
            RunConfig cfg = load_config(config_path, overrides);
            cfg.pipeline = Pipeline::Discriminative;
            print_result(train_discriminative(cfg));
        } else if (*train_gen) {
            RunConfig cfg = load_config(config_path, overrides);
            cfg.pipeline = Pipeline::Generative;
            print_result(train_generative(cfg));
        } else if (*eval) {
            RunConfig cfg = load_config(config_path, overrides);
            nlohmann::json report;
            eval_checkpoint(checkpoint_path, cfg, &report);
            std::cout << report.dump(2) << '\n';
        } else if (*gc) {
            const GradSuiteReport report = run_grad_suites(module);
            for (const auto& line : report.lines)
                std::printf("%-28s max_rel_error %.3e  (%s)\n",
                            line.name.c_str(), line.max_rel_error,
                            line.worst_param.c_str());
            std::printf("overall max_rel_error %.3e -> %s\n",
                        report.max_rel_error,
                        report.passed() ? "PASS" : "FAIL");
            if (!report.passed())
                return 2;
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
