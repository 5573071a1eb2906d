#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "mvprof/textio.hpp"

namespace mvprof {

// Lowercase whitespace tokenization used by both text metrics.
std::vector<std::string> tokenize_ws_lower(std::string_view text);

// Exact-match fraction over equal-length prediction/gold lists.
double top1(const std::vector<ProficiencyLabel>& preds,
            const std::vector<ProficiencyLabel>& golds);

// LCS-based F-score: P = LCS/|cand|, R = LCS/|ref|, F = 2PR/(P+R).
double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference);

// Exact-match METEOR: greedy one-to-one alignment in reference order,
// F_mean = 10PR/(R+9P), penalty = 0.5*(chunks/m)^3.
double meteor_exact(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference);

struct DomainScore {
    int count = 0;
    int correct = 0;
};

struct EvalReport {
    double top1 = 0.0;               // unparseable counted as wrong
    double top1_parsed_only = 0.0;   // unparseable excluded
    double parse_success_rate = 0.0; // strict grammar
    double lenient_parse_rate = 0.0; // strict-or-lenient
    double rouge_l = 0.0;            // mean over parsed samples
    double meteor_exact = 0.0;       // mean over parsed samples
    std::map<int, DomainScore> per_domain;
    int sample_count = 0;

    nlohmann::json to_json() const;
};

// One generated sample: what the model produced vs. what it should have.
struct GenRecord {
    ProficiencyLabel gold_label = ProficiencyLabel::Novice;
    int domain_id = 0;
    std::string reference_commentary;
    std::string generated_text;
};

// Scores generated structured responses: strict parse first, lenient as the
// fallback; unparseable samples count as wrong for top1 and are excluded
// from the text metrics (the parsed-only convention is reported as well).
EvalReport evaluate_generations(const std::vector<GenRecord>& records);

// Label-only variant for the discriminative pipeline.
EvalReport evaluate_labels(const std::vector<ProficiencyLabel>& preds,
                           const std::vector<ProficiencyLabel>& golds,
                           const std::vector<int>& domains);

} // namespace mvprof
