#include "mvprof/train.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace mvprof {

const char* pipeline_name(Pipeline p) {
    return p == Pipeline::Discriminative ? "discriminative" : "generative";
}

Pipeline pipeline_from_name(const std::string& name) {
    if (name == "discriminative")
        return Pipeline::Discriminative;
    if (name == "generative")
        return Pipeline::Generative;
    throw ConfigError("unknown pipeline '" + name +
                      "' (expected discriminative|generative)");
}

nlohmann::json ModelConfig::to_json() const {
    return nlohmann::json{{"heads", heads},
                          {"ffn_mult", ffn_mult},
                          {"lora_rank", lora_rank},
                          {"lora_alpha", lora_alpha},
                          {"lora_base_trainable", lora_base_trainable},
                          {"d_lm", d_lm},
                          {"dec_layers", dec_layers},
                          {"dec_heads", dec_heads},
                          {"dec_ffn_mult", dec_ffn_mult},
                          {"max_len", max_len},
                          {"max_new", max_new},
                          {"instruction", instruction}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.heads = j.value("heads", c.heads);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    c.lora_rank = j.value("lora_rank", c.lora_rank);
    c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
    c.lora_base_trainable = j.value("lora_base_trainable", c.lora_base_trainable);
    c.d_lm = j.value("d_lm", c.d_lm);
    c.dec_layers = j.value("dec_layers", c.dec_layers);
    c.dec_heads = j.value("dec_heads", c.dec_heads);
    c.dec_ffn_mult = j.value("dec_ffn_mult", c.dec_ffn_mult);
    c.max_len = j.value("max_len", c.max_len);
    c.max_new = j.value("max_new", c.max_new);
    c.instruction = j.value("instruction", c.instruction);
    return c;
}

nlohmann::json OptimConfig::to_json() const {
    return nlohmann::json{{"kind", kind == OptKind::Adam ? "adam" : "sgd"},
                          {"lr", lr},
                          {"beta1", beta1},
                          {"beta2", beta2},
                          {"eps", eps},
                          {"epochs", epochs},
                          {"batch_size", batch_size}};
}

OptimConfig OptimConfig::from_json(const nlohmann::json& j) {
    OptimConfig c;
    const std::string kind = j.value("kind", std::string("adam"));
    if (kind == "adam")
        c.kind = OptKind::Adam;
    else if (kind == "sgd")
        c.kind = OptKind::Sgd;
    else
        throw ConfigError("unknown optimizer kind '" + kind + "'");
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (c.epochs < 1 || c.batch_size < 1)
        throw ConfigError("optim: epochs and batch_size must be >= 1");
    return c;
}

nlohmann::json RunConfig::to_json() const {
    return nlohmann::json{{"pipeline", pipeline_name(pipeline)},
                          {"seed", seed},
                          {"out_dir", out_dir},
                          {"data", data.to_json()},
                          {"model", model.to_json()},
                          {"optim", optim.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    c.pipeline =
        pipeline_from_name(j.value("pipeline", std::string("discriminative")));
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("data"))
        c.data = SynthConfig::from_json(j.at("data"));
    if (j.contains("model"))
        c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("optim"))
        c.optim = OptimConfig::from_json(j.at("optim"));
    return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw; // plain string
    }

    nlohmann::json* node = &config;
    std::size_t begin = 0;
    while (true) {
        const std::size_t dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot - begin);
        if (key.empty())
            throw ConfigError("override '" + assignment + "' has an empty key");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        begin = dot + 1;
    }
}

// ---- models -----------------------------------------------------------------

namespace {

FusionConfig fusion_config(const RunConfig& cfg) {
    FusionConfig fc;
    fc.feature_dim = cfg.data.feature_dim;
    fc.heads = cfg.model.heads;
    fc.ffn_mult = cfg.model.ffn_mult;
    fc.lora_rank = cfg.model.lora_rank;
    fc.lora_alpha = cfg.model.lora_alpha;
    fc.lora_base_trainable = cfg.model.lora_base_trainable;
    return fc;
}

AgpConfig agp_config(const RunConfig& cfg) {
    AgpConfig ac;
    ac.feature_dim = cfg.data.feature_dim;
    ac.lm_dim = cfg.model.d_lm;
    ac.heads = cfg.model.heads;
    ac.ffn_mult = cfg.model.ffn_mult;
    ac.lora_rank = cfg.model.lora_rank;
    ac.lora_alpha = cfg.model.lora_alpha;
    return ac;
}

DecoderConfig decoder_config(const RunConfig& cfg) {
    DecoderConfig dc;
    dc.vocab_size = Vocab().size();
    dc.dim = cfg.model.d_lm;
    dc.heads = cfg.model.dec_heads;
    dc.layers = cfg.model.dec_layers;
    dc.ffn_mult = cfg.model.dec_ffn_mult;
    dc.max_len = cfg.model.max_len;
    return dc;
}

std::string build_prompt(const RunConfig& cfg) {
    std::string prompt;
    for (int t = 0; t < cfg.data.token_count(); ++t)
        prompt += Vocab::kVidMarker;
    prompt += cfg.model.instruction;
    return prompt;
}

std::vector<double> snapshot_params(const ParamList& params) {
    std::vector<double> snap;
    for (const Param& p : params)
        snap.insert(snap.end(), p.tensor->data(),
                    p.tensor->data() + p.tensor->size());
    return snap;
}

void restore_snapshot(const ParamList& params, const std::vector<double>& snap) {
    std::size_t off = 0;
    for (const Param& p : params) {
        std::copy_n(snap.data() + off, std::size_t(p.tensor->size()),
                    p.tensor->data());
        off += std::size_t(p.tensor->size());
    }
}

std::vector<int> epoch_order(int n, Rng& rng) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        order[std::size_t(i)] = i;
    for (int i = n - 1; i > 0; --i) {
        const int j = int(rng.below(std::uint64_t(i + 1)));
        std::swap(order[std::size_t(i)], order[std::size_t(j)]);
    }
    return order;
}

void write_outputs(const RunConfig& cfg, const ParamList& all_params,
                   TrainResult& result) {
    std::filesystem::create_directories(cfg.out_dir);
    result.checkpoint_path =
        (std::filesystem::path(cfg.out_dir) / "checkpoint.skf").string();
    result.report_path =
        (std::filesystem::path(cfg.out_dir) / "report.json").string();
    save_checkpoint(result.checkpoint_path, cfg.to_json(), all_params);
    std::ofstream out(result.report_path, std::ios::trunc);
    out << result.report_json.dump(2) << '\n';
}

nlohmann::json base_report_json(const RunConfig& cfg, const TrainResult& r) {
    return nlohmann::json{{"pipeline", pipeline_name(cfg.pipeline)},
                          {"seed", cfg.seed},
                          {"best_epoch", r.best_epoch},
                          {"trainable_params", r.trainable_params},
                          {"total_params", r.total_params},
                          {"frozen_params", r.total_params - r.trainable_params},
                          {"eval", r.report.to_json()}};
}

} // namespace

ClsModel::ClsModel(const RunConfig& cfg, Rng& rng)
    : fusion(fusion_config(cfg), rng),
      head(kLabelCount, cfg.data.feature_dim, rng) {}

ParamList ClsModel::params(bool trainable_only) {
    ParamList out;
    fusion.collect(out, "fusion", trainable_only);
    head.collect(out, "head", trainable_only);
    return out;
}

ProficiencyLabel ClsModel::predict(const SynthSample& sample) const {
    const Tensor pooled = mean_pool_views(sample.bundle);
    const Tensor logits = classify(head, fusion.fuse(pooled));
    return ProficiencyLabel(argmax_index(logits));
}

GenModel::GenModel(const RunConfig& cfg, Rng& rng)
    : agp(agp_config(cfg), rng), decoder(decoder_config(cfg), rng),
      prompt(build_prompt(cfg)) {}

ParamList GenModel::params(bool trainable_only) {
    ParamList out;
    agp.collect(out, "agp", trainable_only);
    decoder.collect(out, "decoder", trainable_only);
    return out;
}

std::string GenModel::generate(const SynthSample& sample, int max_new) const {
    const Tensor video_tokens = agp.project(sample.bundle);
    return generate_greedy(decoder, vocab, prompt, video_tokens, max_new);
}

// ---- discriminative training ---------------------------------------------

TrainResult train_discriminative(const RunConfig& cfg) {
    if (cfg.pipeline != Pipeline::Discriminative)
        throw ConfigError("train_discriminative: config pipeline is " +
                          std::string(pipeline_name(cfg.pipeline)));
    const Dataset ds = generate_dataset(cfg.data);

    Rng model_rng = Rng(cfg.seed).fork(0xA11CE);
    ClsModel model(cfg, model_rng);
    ParamList trainable = model.params(true);
    ParamList all_params = model.params(false);

    OptimizerState opt;
    opt.kind = cfg.optim.kind;
    opt.learning_rate = cfg.optim.lr;
    opt.beta1 = cfg.optim.beta1;
    opt.beta2 = cfg.optim.beta2;
    opt.epsilon = cfg.optim.eps;

    // Pooling is sampler-independent per sample, so cache it.
    std::vector<Tensor> pooled;
    pooled.reserve(ds.train.size());
    for (const SynthSample& s : ds.train)
        pooled.push_back(mean_pool_views(s.bundle));

    Rng shuffle_rng = Rng(cfg.seed).fork(0x5F0F);
    TrainResult result;
    std::vector<double> best_snapshot;
    const int n = int(ds.train.size());

    for (int epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
        const std::vector<int> order = epoch_order(n, shuffle_rng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int begin = 0; begin < n; begin += cfg.optim.batch_size) {
            const int end = std::min(n, begin + cfg.optim.batch_size);
            zero_grads(trainable);
            Tape tape;
            Tensor total = Tensor::scalar(0.0);
            for (int i = begin; i < end; ++i) {
                const SynthSample& s = ds.train[std::size_t(order[std::size_t(i)])];
                Tensor logits = reshape(
                    classify(model.head,
                             model.fusion.fuse(pooled[std::size_t(order[std::size_t(i)])])),
                    {1, kLabelCount});
                total = add(total, cross_entropy(logits, {int(s.label)}));
            }
            Tensor loss = affine_scalar(total, 1.0 / double(end - begin), 0.0);
            tape.backward(loss);
            optimizer_step(opt, trainable);
            epoch_loss += loss.item();
            ++batches;
        }
        result.final_train_loss = epoch_loss / std::max(1, batches);

        std::vector<ProficiencyLabel> preds, golds;
        for (const SynthSample& s : ds.val) {
            preds.push_back(model.predict(s));
            golds.push_back(s.label);
        }
        const double val_acc = top1(preds, golds);
        if (result.best_epoch < 0 || val_acc > result.best_val) {
            result.best_val = val_acc;
            result.best_epoch = epoch;
            best_snapshot = snapshot_params(all_params);
        }
    }

    restore_snapshot(all_params, best_snapshot);

    std::vector<ProficiencyLabel> preds, golds;
    std::vector<int> domains;
    for (const SynthSample& s : ds.test) {
        preds.push_back(model.predict(s));
        golds.push_back(s.label);
        domains.push_back(s.domain_id);
    }
    result.report = evaluate_labels(preds, golds, domains);
    result.trainable_params = param_count(trainable);
    result.total_params = param_count(all_params);
    result.report_json = base_report_json(cfg, result);
    write_outputs(cfg, all_params, result);
    return result;
}

// ---- generative training ----------------------------------------------------

namespace {

Tensor gen_sample_loss(GenModel& model, const SynthSample& sample) {
    const std::string target = format_target({sample.label, sample.commentary});
    const Tensor video_tokens = model.agp.project(sample.bundle);
    const SequencePlan plan =
        assemble_sequence(model.prompt, video_tokens.shape()[0], target,
                          model.vocab, model.decoder.config().max_len);
    return lm_loss(lm_forward(model.decoder, plan, video_tokens), plan);
}

// Validation score for best-epoch selection, one teacher-forced pass per
// sample: mean masked loss plus the argmax hit rate at the position that
// predicts the first label character. The mean loss alone is a poor
// selector: it bottoms out while the label association is still forming,
// because the deterministic template dominates the character count.
struct GenValScore {
    double label_acc = 0.0;
    double loss = 0.0;

    bool better_than(const GenValScore& other) const {
        if (label_acc != other.label_acc)
            return label_acc > other.label_acc;
        return loss < other.loss;
    }
};

GenValScore gen_val_score(GenModel& model, const std::vector<SynthSample>& set) {
    static const int kLabelOffset = int(std::string("Proficiency Level: ").size());
    GenValScore score;
    for (const SynthSample& s : set) {
        const std::string target = format_target({s.label, s.commentary});
        const Tensor video = model.agp.project(s.bundle);
        const SequencePlan plan =
            assemble_sequence(model.prompt, video.shape()[0], target,
                              model.vocab, model.decoder.config().max_len);
        const Tensor logits = lm_forward(model.decoder, plan, video);
        score.loss += lm_loss(logits, plan).item();
        const int pos = plan.response_start + kLabelOffset;
        const double* row =
            logits.data() + std::size_t(pos - 1) * logits.cols();
        int best = 4;
        for (int j = 5; j < logits.cols(); ++j)
            if (row[j] > row[best])
                best = j;
        score.label_acc += best == plan.ids[std::size_t(pos)] ? 1.0 : 0.0;
    }
    score.loss /= double(set.size());
    score.label_acc /= double(set.size());
    return score;
}

} // namespace

TrainResult train_generative(const RunConfig& cfg) {
    if (cfg.pipeline != Pipeline::Generative)
        throw ConfigError("train_generative: config pipeline is " +
                          std::string(pipeline_name(cfg.pipeline)));
    const Dataset ds = generate_dataset(cfg.data);

    Rng model_rng = Rng(cfg.seed).fork(0xBEEF5);
    GenModel model(cfg, model_rng);
    ParamList trainable = model.params(true);
    ParamList all_params = model.params(false);

    OptimizerState opt;
    opt.kind = cfg.optim.kind;
    opt.learning_rate = cfg.optim.lr;
    opt.beta1 = cfg.optim.beta1;
    opt.beta2 = cfg.optim.beta2;
    opt.epsilon = cfg.optim.eps;

    Rng shuffle_rng = Rng(cfg.seed).fork(0x5F1F);
    TrainResult result;
    std::vector<double> best_snapshot;
    GenValScore best_score;
    const int n = int(ds.train.size());

    for (int epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
        const std::vector<int> order = epoch_order(n, shuffle_rng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int begin = 0; begin < n; begin += cfg.optim.batch_size) {
            const int end = std::min(n, begin + cfg.optim.batch_size);
            zero_grads(trainable);
            Tape tape;
            Tensor total = Tensor::scalar(0.0);
            for (int i = begin; i < end; ++i)
                total = add(total,
                            gen_sample_loss(
                                model, ds.train[std::size_t(order[std::size_t(i)])]));
            Tensor loss = affine_scalar(total, 1.0 / double(end - begin), 0.0);
            tape.backward(loss);
            optimizer_step(opt, trainable);
            epoch_loss += loss.item();
            ++batches;
        }
        result.final_train_loss = epoch_loss / std::max(1, batches);

        const GenValScore score = gen_val_score(model, ds.val);
        if (result.best_epoch < 0 || score.better_than(best_score)) {
            best_score = score;
            result.best_val = score.label_acc;
            result.best_epoch = epoch;
            best_snapshot = snapshot_params(all_params);
        }
    }

    restore_snapshot(all_params, best_snapshot);

    std::vector<GenRecord> records(ds.test.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(ds.test.size()); ++i) {
        const SynthSample& s = ds.test[std::size_t(i)];
        records[std::size_t(i)] = GenRecord{s.label, s.domain_id, s.commentary,
                                            model.generate(s, cfg.model.max_new)};
    }
    result.report = evaluate_generations(records);
    result.trainable_params = param_count(trainable);
    result.total_params = param_count(all_params);
    result.report_json = base_report_json(cfg, result);
    write_outputs(cfg, all_params, result);
    return result;
}

// ---- eval ---------------------------------------------------------------------

EvalReport eval_checkpoint(const std::string& checkpoint_path,
                           const RunConfig& cfg, nlohmann::json* report_json) {
    const LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
    const RunConfig saved = RunConfig::from_json(ckpt.config);
    const Dataset ds = generate_dataset(cfg.data);

    EvalReport report;
    long long trainable_n = 0, total_n = 0;
    if (saved.pipeline == Pipeline::Discriminative) {
        Rng rng = Rng(saved.seed).fork(0xA11CE);
        ClsModel model(saved, rng);
        restore_params(ckpt, model.params(false));
        std::vector<ProficiencyLabel> preds, golds;
        std::vector<int> domains;
        for (const SynthSample& s : ds.test) {
            preds.push_back(model.predict(s));
            golds.push_back(s.label);
            domains.push_back(s.domain_id);
        }
        report = evaluate_labels(preds, golds, domains);
        trainable_n = param_count(model.params(true));
        total_n = param_count(model.params(false));
    } else {
        Rng rng = Rng(saved.seed).fork(0xBEEF5);
        GenModel model(saved, rng);
        restore_params(ckpt, model.params(false));
        std::vector<GenRecord> records(ds.test.size());
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(ds.test.size()); ++i) {
            const SynthSample& s = ds.test[std::size_t(i)];
            records[std::size_t(i)] =
                GenRecord{s.label, s.domain_id, s.commentary,
                          model.generate(s, saved.model.max_new)};
        }
        report = evaluate_generations(records);
        trainable_n = param_count(model.params(true));
        total_n = param_count(model.params(false));
    }
    if (report_json) {
        *report_json =
            nlohmann::json{{"pipeline", pipeline_name(saved.pipeline)},
                           {"seed", saved.seed},
                           {"checkpoint", checkpoint_path},
                           {"trainable_params", trainable_n},
                           {"total_params", total_n},
                           {"frozen_params", total_n - trainable_n},
                           {"eval", report.to_json()}};
    }
    return report;
}

} // namespace mvprof
