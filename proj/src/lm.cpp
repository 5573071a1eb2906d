#include "mvprof/lm.hpp"

#include <algorithm>
#include <cstring>

namespace mvprof {

Vocab::Vocab() = default;

int Vocab::encode_char(char c) const {
    const unsigned char u = static_cast<unsigned char>(c);
    if (u < 0x20 || u > 0x7E)
        throw ContractError("vocab: byte " + std::to_string(int(u)) +
                            " outside the printable-ASCII alphabet");
    return 4 + (u - 0x20);
}

char Vocab::decode_char(int id) const {
    if (id < 4 || id >= size())
        throw IndexError("vocab: id " + std::to_string(id) +
                         " is not a character symbol");
    return char(0x20 + (id - 4));
}

std::vector<int> Vocab::encode(const std::string& text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text)
        ids.push_back(encode_char(c));
    return ids;
}

std::vector<int> Vocab::encode_prompt(const std::string& text) const {
    std::vector<int> ids;
    const std::string marker = kVidMarker;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, marker.size(), marker) == 0) {
            ids.push_back(kVid);
            i += marker.size();
        } else {
            ids.push_back(encode_char(text[i]));
            ++i;
        }
    }
    return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids)
        if (id >= 4)
            out.push_back(decode_char(id));
    return out;
}

void DecoderConfig::validate() const {
    if (vocab_size < 5)
        throw ConfigError("decoder: vocab_size must cover the specials");
    if (dim < 1 || heads < 1 || dim % heads != 0)
        throw ConfigError("decoder: dim must be positive and divisible by heads");
    if (layers < 1)
        throw ConfigError("decoder: need at least one layer");
    if (max_len < 2)
        throw ConfigError("decoder: max_len must be >= 2");
}

TinyDecoder::TinyDecoder(const DecoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const double scale = 1.0 / std::sqrt(double(cfg.dim));
    tok_embed = Tensor::randn({cfg.vocab_size, cfg.dim}, rng, scale);
    pos_embed = Tensor::randn({cfg.max_len, cfg.dim}, rng, scale);
    tok_embed.set_requires_grad();
    pos_embed.set_requires_grad();
    layers.reserve(std::size_t(cfg.layers));
    for (int i = 0; i < cfg.layers; ++i) {
        Layer layer;
        layer.ln1_gain = Tensor::full({cfg.dim}, 1.0);
        layer.ln1_bias = Tensor({cfg.dim});
        layer.ln2_gain = Tensor::full({cfg.dim}, 1.0);
        layer.ln2_bias = Tensor({cfg.dim});
        layer.ln1_gain.set_requires_grad();
        layer.ln1_bias.set_requires_grad();
        layer.ln2_gain.set_requires_grad();
        layer.ln2_bias.set_requires_grad();
        layer.attn = AttentionParams(cfg.dim, cfg.heads, /*lora_rank=*/0,
                                     /*lora_alpha=*/1.0,
                                     /*base_trainable=*/true, rng);
        layer.ffn1 = LinearLayer(cfg.dim * cfg.ffn_mult, cfg.dim, rng);
        layer.ffn2 = LinearLayer(cfg.dim, cfg.dim * cfg.ffn_mult, rng);
        layers.push_back(std::move(layer));
    }
    final_gain = Tensor::full({cfg.dim}, 1.0);
    final_bias = Tensor({cfg.dim});
    final_gain.set_requires_grad();
    final_bias.set_requires_grad();
    head = LinearLayer(cfg.vocab_size, cfg.dim, rng);
}

Tensor TinyDecoder::forward(const SequencePlan& plan,
                            const Tensor& video_tokens) const {
    const int l = int(plan.ids.size());
    if (l < 1)
        throw ContractError("lm_forward: empty sequence");
    if (l > cfg_.max_len)
        throw LengthError("lm_forward: sequence length " + std::to_string(l) +
                          " exceeds max_len " + std::to_string(cfg_.max_len));
    if (plan.video_count > 0 &&
        (video_tokens.rank() != 2 || video_tokens.shape()[0] != plan.video_count ||
         video_tokens.shape()[1] != cfg_.dim))
        throw DimError("lm_forward: video tokens must be [" +
                       std::to_string(plan.video_count) + ", " +
                       std::to_string(cfg_.dim) + "]");

    // Embedding rows: contiguous runs of table ids interleaved with slices of
    // the video-token tensor, so gradients reach both the table and the
    // projector.
    std::vector<Tensor> segments;
    int vid_seen = 0;
    std::size_t i = 0;
    while (i < plan.ids.size()) {
        if (plan.ids[i] == Vocab::kVid) {
            std::size_t j = i;
            while (j < plan.ids.size() && plan.ids[j] == Vocab::kVid)
                ++j;
            segments.push_back(
                slice_rows(video_tokens, vid_seen, int(j - i)));
            vid_seen += int(j - i);
            i = j;
        } else {
            std::size_t j = i;
            std::vector<int> run;
            while (j < plan.ids.size() && plan.ids[j] != Vocab::kVid)
                run.push_back(plan.ids[j++]);
            segments.push_back(gather_rows(tok_embed, run));
            i = j;
        }
    }
    Tensor x = segments.size() == 1 ? segments[0] : concat_rows(segments);
    x = add(x, slice_rows(pos_embed, 0, l));

    for (const Layer& layer : layers) {
        Tensor normed =
            layer_norm(x, layer.ln1_gain, layer.ln1_bias, kLayerNormEps);
        x = add(x, multihead_attention(layer.attn, normed, /*causal=*/true));
        Tensor normed2 =
            layer_norm(x, layer.ln2_gain, layer.ln2_bias, kLayerNormEps);
        x = add(x, layer.ffn2.forward(gelu(layer.ffn1.forward(normed2))));
    }
    x = layer_norm(x, final_gain, final_bias, kLayerNormEps);
    return head.forward(x);
}

void TinyDecoder::collect(ParamList& out, const std::string& prefix,
                          bool trainable_only) {
    out.push_back({prefix + ".tok_embed", &tok_embed});
    out.push_back({prefix + ".pos_embed", &pos_embed});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string base = prefix + ".layer" + std::to_string(i);
        Layer& layer = layers[i];
        out.push_back({base + ".ln1.gain", &layer.ln1_gain});
        out.push_back({base + ".ln1.bias", &layer.ln1_bias});
        layer.attn.collect(out, base + ".attn", trainable_only);
        out.push_back({base + ".ln2.gain", &layer.ln2_gain});
        out.push_back({base + ".ln2.bias", &layer.ln2_bias});
        layer.ffn1.collect(out, base + ".ffn1", trainable_only);
        layer.ffn2.collect(out, base + ".ffn2", trainable_only);
    }
    out.push_back({prefix + ".final.gain", &final_gain});
    out.push_back({prefix + ".final.bias", &final_bias});
    head.collect(out, prefix + ".head", trainable_only);
}

SequencePlan assemble_sequence(const std::string& prompt, int video_token_count,
                               const std::string& response, const Vocab& vocab,
                               int max_len) {
    SequencePlan plan;
    plan.ids.push_back(Vocab::kBos);
    const std::vector<int> prompt_ids = vocab.encode_prompt(prompt);
    int markers = 0;
    for (int id : prompt_ids)
        markers += id == Vocab::kVid ? 1 : 0;
    if (markers != video_token_count)
        throw ContractError("assemble_sequence: prompt has " +
                            std::to_string(markers) + " video markers but " +
                            std::to_string(video_token_count) +
                            " video tokens were provided");
    plan.ids.insert(plan.ids.end(), prompt_ids.begin(), prompt_ids.end());
    plan.video_count = video_token_count;
    plan.response_start = int(plan.ids.size());
    if (!response.empty()) {
        const std::vector<int> resp_ids = vocab.encode(response);
        plan.ids.insert(plan.ids.end(), resp_ids.begin(), resp_ids.end());
        plan.ids.push_back(Vocab::kEos);
    }
    if (int(plan.ids.size()) > max_len)
        throw LengthError("assemble_sequence: length " +
                          std::to_string(plan.ids.size()) + " exceeds " +
                          std::to_string(max_len));
    plan.loss_mask.assign(plan.ids.size(), false);
    for (std::size_t i = std::size_t(plan.response_start); i < plan.ids.size();
         ++i)
        plan.loss_mask[i] = true;
    return plan;
}

Tensor lm_forward(const TinyDecoder& model, const SequencePlan& plan,
                  const Tensor& video_tokens) {
    return model.forward(plan, video_tokens);
}

Tensor lm_loss(const Tensor& logits, const SequencePlan& plan) {
    if (logits.rank() != 2 || logits.shape()[0] != int(plan.ids.size()))
        throw DimError("lm_loss: logits " + shape_str(logits.shape()) +
                       " do not match plan length " +
                       std::to_string(plan.ids.size()));
    std::vector<int> pred_rows;
    std::vector<int> targets;
    for (std::size_t pos = 1; pos < plan.ids.size(); ++pos) {
        if (plan.loss_mask[pos]) {
            pred_rows.push_back(int(pos) - 1);
            targets.push_back(plan.ids[pos]);
        }
    }
    if (targets.empty())
        throw ContractError("lm_loss: no masked-in positions");
    Tensor selected = gather_rows(logits, pred_rows);
    return cross_entropy(selected, targets);
}

std::string generate_greedy(const TinyDecoder& model, const Vocab& vocab,
                            const std::string& prompt,
                            const Tensor& video_tokens, int max_new) {
    SequencePlan plan = assemble_sequence(prompt, video_tokens.size() == 0
                                                      ? 0
                                                      : video_tokens.shape()[0],
                                          "", vocab, model.config().max_len);
    if (int(plan.ids.size()) + max_new > model.config().max_len)
        throw LengthError("generate_greedy: prefix " +
                          std::to_string(plan.ids.size()) + " + max_new " +
                          std::to_string(max_new) + " exceeds max_len " +
                          std::to_string(model.config().max_len));
    std::vector<int> out_ids;
    for (int step = 0; step < max_new; ++step) {
        Tensor logits = model.forward(plan, video_tokens);
        const double* last =
            logits.data() + std::size_t(logits.shape()[0] - 1) * logits.cols();
        // Argmax over emittable symbols (characters and EOS); PAD/BOS/VID are
        // structural and never valid continuations. Strict comparison keeps
        // ties on the lowest id.
        int best = Vocab::kEos;
        for (int j = 4; j < logits.cols(); ++j)
            if (last[j] > last[best])
                best = j;
        if (best == Vocab::kEos)
            break;
        plan.ids.push_back(best);
        plan.loss_mask.push_back(false);
        out_ids.push_back(best);
    }
    return vocab.decode(out_ids);
}

} // namespace mvprof
