#pragma once

#include <string>

#include "json.hpp"

#include "mvprof/checkpoint.hpp"
#include "mvprof/fusion.hpp"
#include "mvprof/lm.hpp"
#include "mvprof/metrics.hpp"
#include "mvprof/synth.hpp"

namespace mvprof {

enum class Pipeline { Discriminative, Generative };

const char* pipeline_name(Pipeline p);
Pipeline pipeline_from_name(const std::string& name);

struct ModelConfig {
    // fusion block (discriminative)
    int heads = 4;
    int ffn_mult = 2;
    int lora_rank = 4;
    double lora_alpha = 8.0;
    bool lora_base_trainable = false;
    // projector + decoder (generative)
    int d_lm = 32;
    int dec_layers = 2;
    int dec_heads = 4;
    int dec_ffn_mult = 2;
    int max_len = 256;
    int max_new = 160;
    std::string instruction = "Rate.";

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

struct OptimConfig {
    OptKind kind = OptKind::Adam;
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 40;
    int batch_size = 16;

    nlohmann::json to_json() const;
    static OptimConfig from_json(const nlohmann::json& j);
};

struct RunConfig {
    Pipeline pipeline = Pipeline::Discriminative;
    std::uint64_t seed = 42;
    std::string out_dir = "runs/out";
    SynthConfig data;
    ModelConfig model;
    OptimConfig optim;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load_file(const std::string& path);
};

// Dotted-path override, e.g. "data.noise_std=0.1" or "optim.epochs=5".
// Values parse as JSON scalars, falling back to strings.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Discriminative stack: mean-pooled views -> CrossViewFusion -> 4-way head.
struct ClsModel {
    CrossViewFusionBlock fusion;
    LinearLayer head;

    ClsModel(const RunConfig& cfg, Rng& rng);
    ParamList params(bool trainable_only);
    ProficiencyLabel predict(const SynthSample& sample) const;
};

// Generative stack: frozen features -> AGP -> video tokens -> tiny decoder.
struct GenModel {
    AgpBlock agp;
    TinyDecoder decoder;
    Vocab vocab;
    std::string prompt; // VID markers followed by the instruction text

    GenModel(const RunConfig& cfg, Rng& rng);
    ParamList params(bool trainable_only);
    std::string generate(const SynthSample& sample, int max_new) const;
};

struct TrainResult {
    EvalReport report;
    nlohmann::json report_json;
    std::string checkpoint_path;
    std::string report_path;
    int best_epoch = -1;
    double best_val = 0.0;
    double final_train_loss = 0.0;
    long long trainable_params = 0;
    long long total_params = 0;
};

TrainResult train_discriminative(const RunConfig& cfg);
TrainResult train_generative(const RunConfig& cfg);

// Rebuilds the model recorded in the checkpoint and evaluates it on the test
// split generated from `cfg.data`.
EvalReport eval_checkpoint(const std::string& checkpoint_path,
                           const RunConfig& cfg, nlohmann::json* report_json);

} // namespace mvprof
