#include "mvprof/metrics.hpp"

#include <algorithm>
#include <cctype>

#include "mvprof/error.hpp"

namespace mvprof {

std::vector<std::string> tokenize_ws_lower(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty())
        tokens.push_back(cur);
    return tokens;
}

double top1(const std::vector<ProficiencyLabel>& preds,
            const std::vector<ProficiencyLabel>& golds) {
    if (preds.size() != golds.size())
        throw DimError("top1: " + std::to_string(preds.size()) +
                       " predictions vs " + std::to_string(golds.size()) +
                       " golds");
    if (preds.empty())
        throw DimError("top1: empty lists");
    int correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        correct += preds[i] == golds[i] ? 1 : 0;
    return double(correct) / double(preds.size());
}

namespace {

int lcs_length(const std::vector<std::string>& a,
               const std::vector<std::string>& b) {
    const std::size_t n = b.size();
    std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

} // namespace

double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference) {
    if (reference.empty())
        throw DimError("rouge_l: empty reference");
    if (candidate.empty())
        return 0.0;
    const int lcs = lcs_length(candidate, reference);
    if (lcs == 0)
        return 0.0;
    const double p = double(lcs) / double(candidate.size());
    const double r = double(lcs) / double(reference.size());
    return 2.0 * p * r / (p + r);
}

double meteor_exact(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference) {
    if (reference.empty())
        throw DimError("meteor_exact: empty reference");
    if (candidate.empty())
        return 0.0;

    // Greedy one-to-one alignment walked in reference order; each reference
    // token binds the leftmost unused identical candidate token.
    std::vector<bool> used(candidate.size(), false);
    std::vector<std::pair<int, int>> pairs; // (candidate pos, reference pos)
    for (std::size_t j = 0; j < reference.size(); ++j) {
        for (std::size_t i = 0; i < candidate.size(); ++i) {
            if (!used[i] && candidate[i] == reference[j]) {
                used[i] = true;
                pairs.emplace_back(int(i), int(j));
                break;
            }
        }
    }
    const int m = int(pairs.size());
    if (m == 0)
        return 0.0;

    const double p = double(m) / double(candidate.size());
    const double r = double(m) / double(reference.size());
    const double f_mean = 10.0 * p * r / (r + 9.0 * p);

    std::sort(pairs.begin(), pairs.end());
    int chunks = 1;
    for (std::size_t k = 1; k < pairs.size(); ++k) {
        const bool contiguous = pairs[k].first == pairs[k - 1].first + 1 &&
                                pairs[k].second == pairs[k - 1].second + 1;
        if (!contiguous)
            ++chunks;
    }
    const double frag = double(chunks) / double(m);
    const double penalty = 0.5 * frag * frag * frag;
    return f_mean * (1.0 - penalty);
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json pd = nlohmann::json::object();
    for (const auto& [domain, score] : per_domain) {
        pd[std::to_string(domain)] = {
            {"count", score.count},
            {"top1", score.count > 0 ? double(score.correct) / score.count : 0.0}};
    }
    return nlohmann::json{{"top1", top1},
                          {"top1_parsed_only", top1_parsed_only},
                          {"parse_success_rate", parse_success_rate},
                          {"lenient_parse_rate", lenient_parse_rate},
                          {"rouge_l", rouge_l},
                          {"meteor_exact", meteor_exact},
                          {"per_domain", pd},
                          {"sample_count", sample_count}};
}

EvalReport evaluate_generations(const std::vector<GenRecord>& records) {
    if (records.empty())
        throw DimError("evaluate_generations: empty record list");
    EvalReport report;
    report.sample_count = int(records.size());

    int strict_ok = 0, any_ok = 0, correct = 0, correct_parsed = 0;
    double rouge_sum = 0.0, meteor_sum = 0.0;
    int text_scored = 0;

    for (const GenRecord& rec : records) {
        DomainScore& ds = report.per_domain[rec.domain_id];
        ds.count += 1;

        ParseResult strict = parse_output(rec.generated_text, false);
        ParseResult parsed = strict.ok ? strict
                                       : parse_output(rec.generated_text, true);
        strict_ok += strict.ok ? 1 : 0;
        any_ok += parsed.ok ? 1 : 0;

        if (parsed.ok) {
            const bool hit = parsed.value.label == rec.gold_label;
            correct += hit ? 1 : 0;
            correct_parsed += hit ? 1 : 0;
            ds.correct += hit ? 1 : 0;
            const auto cand = tokenize_ws_lower(parsed.value.commentary);
            const auto ref = tokenize_ws_lower(rec.reference_commentary);
            rouge_sum += rouge_l(cand, ref);
            meteor_sum += meteor_exact(cand, ref);
            ++text_scored;
        }
    }

    const double n = double(records.size());
    report.top1 = correct / n;
    report.top1_parsed_only = any_ok > 0 ? double(correct_parsed) / any_ok : 0.0;
    report.parse_success_rate = strict_ok / n;
    report.lenient_parse_rate = any_ok / n;
    report.rouge_l = text_scored > 0 ? rouge_sum / text_scored : 0.0;
    report.meteor_exact = text_scored > 0 ? meteor_sum / text_scored : 0.0;
    return report;
}

EvalReport evaluate_labels(const std::vector<ProficiencyLabel>& preds,
                           const std::vector<ProficiencyLabel>& golds,
                           const std::vector<int>& domains) {
    if (preds.size() != golds.size() || preds.size() != domains.size())
        throw DimError("evaluate_labels: list sizes differ");
    EvalReport report;
    report.sample_count = int(preds.size());
    report.top1 = top1(preds, golds);
    report.top1_parsed_only = report.top1;
    report.parse_success_rate = 1.0;
    report.lenient_parse_rate = 1.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        DomainScore& ds = report.per_domain[domains[i]];
        ds.count += 1;
        ds.correct += preds[i] == golds[i] ? 1 : 0;
    }
    return report;
}

} // namespace mvprof
