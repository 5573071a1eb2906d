#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "mvprof/rng.hpp"

namespace mvprof {

// Closed 4-level proficiency scale. Canonical surface strings are fixed;
// matching on input is case-insensitive.
enum class ProficiencyLabel { Novice = 0, EarlyExpert, IntermediateExpert, LateExpert };

inline constexpr int kLabelCount = 4;
inline constexpr int kDomainCount = 6;

const char* label_name(ProficiencyLabel label);
std::array<ProficiencyLabel, 4> all_labels();
// Exact case-insensitive match of a trimmed candidate against the canonical
// strings; nullopt otherwise.
std::optional<ProficiencyLabel> label_from_text(std::string_view text);

struct StructuredResponse {
    ProficiencyLabel label = ProficiencyLabel::Novice;
    std::string commentary;

    bool operator==(const StructuredResponse&) const = default;
};

// "Proficiency Level: <label>; Proficiency Commentary: <commentary>".
// Rejects empty commentary and commentary containing the delimiter sequence,
// which would make the grammar ambiguous.
std::string format_target(const StructuredResponse& resp);

struct ParseResult {
    bool ok = false;
    StructuredResponse value;
    std::string reason; // set when !ok

    explicit operator bool() const { return ok; }
};

// Strict grammar: optional leading whitespace, "Proficiency Level:"
// (case-insensitive), a canonical label with surrounding whitespace allowed,
// ";", optional whitespace, "Proficiency Commentary:" (case-insensitive),
// then the trimmed remainder as commentary (must be non-empty).
//
// Lenient mode applies only after a strict failure: the first
// case-insensitive occurrence of any canonical label anywhere in the text is
// taken as the label, and the commentary is everything after the first ':'
// or ';' that follows it (falling back to the remainder right after the
// label when neither occurs). Never throws.
ParseResult parse_output(std::string_view text, bool lenient = false);

// Deterministic templated commentary: a label verdict phrase, a domain skill
// phrase and one of four seeded variation clauses. The alphabet stays inside
// the character-level vocabulary.
std::string synth_commentary(ProficiencyLabel label, int domain_id,
                             std::uint64_t rng_seed);

const char* domain_name(int domain_id);

} // namespace mvprof
