#include "mvprof/textio.hpp"

#include <algorithm>
#include <cctype>

#include "mvprof/error.hpp"

namespace mvprof {

namespace {

constexpr std::string_view kLevelKey = "Proficiency Level:";
constexpr std::string_view kCommentKey = "Proficiency Commentary:";
constexpr std::string_view kDelimiter = "; Proficiency Commentary:";

const char* kLabelNames[kLabelCount] = {"Novice", "Early Expert",
                                        "Intermediate Expert", "Late Expert"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

char lower(char c) {
    return char(std::tolower(static_cast<unsigned char>(c)));
}

std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b]))
        ++b;
    while (e > b && is_space(s[e - 1]))
        --e;
    return s.substr(b, e - b);
}

bool ci_equal(std::string_view a, std::string_view b) {
    if (a.size() != b.size())
        return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (lower(a[i]) != lower(b[i]))
            return false;
    return true;
}

bool ci_starts_with(std::string_view text, std::string_view prefix) {
    return text.size() >= prefix.size() &&
           ci_equal(text.substr(0, prefix.size()), prefix);
}

std::size_t ci_find(std::string_view text, std::string_view needle,
                    std::size_t from = 0) {
    if (needle.empty() || text.size() < needle.size())
        return std::string_view::npos;
    for (std::size_t i = from; i + needle.size() <= text.size(); ++i)
        if (ci_equal(text.substr(i, needle.size()), needle))
            return i;
    return std::string_view::npos;
}

ParseResult fail(std::string reason) {
    ParseResult r;
    r.reason = std::move(reason);
    return r;
}

ParseResult parse_strict(std::string_view text) {
    std::string_view rest = text;
    while (!rest.empty() && is_space(rest.front()))
        rest.remove_prefix(1);
    if (!ci_starts_with(rest, kLevelKey))
        return fail("missing 'Proficiency Level:' header");
    rest.remove_prefix(kLevelKey.size());

    const std::size_t semi = rest.find(';');
    if (semi == std::string_view::npos)
        return fail("missing ';' after the label");
    const auto label = label_from_text(trim(rest.substr(0, semi)));
    if (!label)
        return fail("unrecognized proficiency label");
    rest.remove_prefix(semi + 1);

    while (!rest.empty() && is_space(rest.front()))
        rest.remove_prefix(1);
    if (!ci_starts_with(rest, kCommentKey))
        return fail("missing 'Proficiency Commentary:' header");
    rest.remove_prefix(kCommentKey.size());

    const std::string_view commentary = trim(rest);
    if (commentary.empty())
        return fail("empty commentary");

    ParseResult r;
    r.ok = true;
    r.value = {*label, std::string(commentary)};
    return r;
}

ParseResult parse_lenient(std::string_view text) {
    std::size_t best_pos = std::string_view::npos;
    int best_label = -1;
    std::size_t best_len = 0;
    for (int l = 0; l < kLabelCount; ++l) {
        const std::size_t pos = ci_find(text, kLabelNames[l]);
        if (pos != std::string_view::npos &&
            (best_pos == std::string_view::npos || pos < best_pos)) {
            best_pos = pos;
            best_label = l;
            best_len = std::string_view(kLabelNames[l]).size();
        }
    }
    if (best_label < 0)
        return fail("no canonical label found");

    std::string_view after = text.substr(best_pos + best_len);
    const std::size_t cut = after.find_first_of(":;");
    std::string_view commentary =
        cut == std::string_view::npos ? trim(after) : trim(after.substr(cut + 1));
    if (commentary.empty())
        return fail("no commentary after the label");

    ParseResult r;
    r.ok = true;
    r.value = {ProficiencyLabel(best_label), std::string(commentary)};
    return r;
}

} // namespace

const char* label_name(ProficiencyLabel label) {
    return kLabelNames[int(label)];
}

std::array<ProficiencyLabel, 4> all_labels() {
    return {ProficiencyLabel::Novice, ProficiencyLabel::EarlyExpert,
            ProficiencyLabel::IntermediateExpert, ProficiencyLabel::LateExpert};
}

std::optional<ProficiencyLabel> label_from_text(std::string_view text) {
    const std::string_view t = trim(text);
    for (int l = 0; l < kLabelCount; ++l)
        if (ci_equal(t, kLabelNames[l]))
            return ProficiencyLabel(l);
    return std::nullopt;
}

std::string format_target(const StructuredResponse& resp) {
    if (trim(resp.commentary).empty())
        throw ContractError("format_target: commentary is empty");
    if (resp.commentary.find(kDelimiter) != std::string::npos)
        throw ContractError(
            "format_target: commentary contains the reserved delimiter '" +
            std::string(kDelimiter) + "'");
    std::string out;
    out += kLevelKey;
    out += ' ';
    out += label_name(resp.label);
    out += "; ";
    out += kCommentKey;
    out += ' ';
    out += resp.commentary;
    return out;
}

ParseResult parse_output(std::string_view text, bool lenient) {
    ParseResult strict = parse_strict(text);
    if (strict.ok || !lenient)
        return strict;
    return parse_lenient(text);
}

namespace {

const char* kVerdicts[kLabelCount] = {
    "movement is hesitant",
    "form is developing",
    "execution is consistent",
    "control is precise",
};

const char* kDomains[kDomainCount] = {"cooking", "basketball", "soccer",
                                      "dancing",  "music",     "bouldering"};

const char* kSkills[kDomainCount] = {
    "in the knife work",  "in the shot release",
    "in the ball control", "in the dance posture",
    "in the musical timing", "in the wall balance",
};

const char* kVariations[4] = {
    "keep drilling basics",
    "smooth out transitions",
    "small fixes compound",
    "stay on this path",
};

} // namespace

const char* domain_name(int domain_id) {
    if (domain_id < 0 || domain_id >= kDomainCount)
        throw IndexError("domain_name: domain_id " + std::to_string(domain_id) +
                         " out of [0," + std::to_string(kDomainCount) + ")");
    return kDomains[domain_id];
}

std::string synth_commentary(ProficiencyLabel label, int domain_id,
                             std::uint64_t rng_seed) {
    if (domain_id < 0 || domain_id >= kDomainCount)
        throw IndexError("synth_commentary: domain_id " +
                         std::to_string(domain_id) + " out of [0," +
                         std::to_string(kDomainCount) + ")");
    Rng rng(rng_seed);
    const int variation = int(rng.below(4));
    std::string out;
    out += kVerdicts[int(label)];
    out += ", ";
    out += kSkills[domain_id];
    out += "; ";
    out += kVariations[variation];
    out += '.';
    return out;
}

} // namespace mvprof
