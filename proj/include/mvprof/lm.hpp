#pragma once

#include <string>
#include <vector>

#include "mvprof/fusion.hpp"
#include "mvprof/tensor.hpp"

namespace mvprof {

// Character-level vocabulary over printable ASCII with four reserved ids.
// The prompt marker "<vid>" expands to the VID placeholder token.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kVid = 3;
    static constexpr const char* kVidMarker = "<vid>";

    Vocab();

    int size() const { return 4 + 95; }
    int encode_char(char c) const;
    char decode_char(int id) const;
    // Plain text, characters only.
    std::vector<int> encode(const std::string& text) const;
    // Prompt text; every "<vid>" becomes one VID token.
    std::vector<int> encode_prompt(const std::string& text) const;
    // Drops special ids.
    std::string decode(const std::vector<int>& ids) const;
};

// Assembled training/generation sequence. ids[i] == kVid marks a position
// whose embedding comes from the video-token tensor instead of the table;
// loss_mask is true exactly on response positions (response chars + EOS).
struct SequencePlan {
    std::vector<int> ids;
    std::vector<bool> loss_mask;
    int video_count = 0;
    int response_start = 0; // == ids.size() when there is no response
};

struct DecoderConfig {
    int vocab_size = 99;
    int dim = 32;
    int heads = 4;
    int layers = 2;
    int ffn_mult = 2;
    int max_len = 256;

    void validate() const;
};

// Compact pre-norm causal decoder with learned positional embeddings.
class TinyDecoder {
public:
    TinyDecoder(const DecoderConfig& cfg, Rng& rng);

    // Logits [L, vocab]; video_tokens ([T, dim], frozen w.r.t. this call's
    // splice, trainable upstream through the projector) fills VID slots.
    Tensor forward(const SequencePlan& plan, const Tensor& video_tokens) const;
    void collect(ParamList& out, const std::string& prefix,
                 bool trainable_only);
    const DecoderConfig& config() const { return cfg_; }

    struct Layer {
        Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
        AttentionParams attn;
        LinearLayer ffn1, ffn2;
    };

    Tensor tok_embed; // [vocab, dim]
    Tensor pos_embed; // [max_len, dim]
    std::vector<Layer> layers;
    Tensor final_gain, final_bias;
    LinearLayer head; // dim -> vocab

private:
    DecoderConfig cfg_;
};

// [BOS, prompt (with VID slots), response, EOS]; response may be empty, in
// which case no EOS is appended (generation prefix). The prompt must contain
// exactly video_token_count markers.
SequencePlan assemble_sequence(const std::string& prompt, int video_token_count,
                               const std::string& response, const Vocab& vocab,
                               int max_len);

Tensor lm_forward(const TinyDecoder& model, const SequencePlan& plan,
                  const Tensor& video_tokens);

// Next-symbol cross entropy averaged over masked-in (response) positions.
Tensor lm_loss(const Tensor& logits, const SequencePlan& plan);

// Greedy argmax decoding until EOS or max_new tokens; ties break toward the
// lowest symbol id. Returns the decoded response text.
std::string generate_greedy(const TinyDecoder& model, const Vocab& vocab,
                            const std::string& prompt,
                            const Tensor& video_tokens, int max_new);

} // namespace mvprof
