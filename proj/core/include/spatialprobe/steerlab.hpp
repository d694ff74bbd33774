#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spatialprobe/common.hpp"
#include "spatialprobe/geometry.hpp"

namespace spatialprobe {

enum class AlphaMode { absolute, relative_to_mean_norm };

std::string_view to_string(AlphaMode m);
AlphaMode parse_alpha_mode(std::string_view s);

struct SteeringVector {
    std::string relation;
    std::int64_t layer = 0;
    Vector v;  // unit norm
    double alpha = 1.0;
    AlphaMode alpha_mode = AlphaMode::relative_to_mean_norm;
    double mean_row_norm = 0.0;

    /// Scale actually applied at inference.
    double effective_alpha() const;
    /// h' = h + effective_alpha * v
    Vector apply(const Vector& h) const { return h + effective_alpha() * v; }
};

/// v = normalize(reconstruct(s, z) - s.mean).
SteeringVector build_steering_vector(const Subspace& s, const Vector& relation_direction_z, std::string relation,
                                     std::int64_t layer, double alpha, AlphaMode mode,
                                     std::optional<double> mean_row_norm = std::nullopt);

inline constexpr std::size_t kMatchWindowTokens = 20;

/// Keywords accepted for a relation. Composed relations require every part.
std::vector<std::string> match_lexicon(std::string_view relation);

/// Case-insensitive whole-token search for the relation keyword(s) within the
/// first 20 whitespace-delimited tokens. Punctuation around tokens is ignored;
/// multiword keywords must appear as a contiguous token run.
bool lexical_match(std::string_view text, std::string_view relation);

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

/// Wilson score interval for a binomial proportion.
Interval wilson_ci(std::int64_t successes, std::int64_t n, double confidence = 0.95);

struct SteerTrial {
    std::string prompt;
    std::string target_relation;
    std::string generated;
    bool matched = false;
};

SteerTrial make_trial(std::string prompt, std::string target_relation, std::string generated);

struct RelationScore {
    std::string relation;
    std::int64_t successes = 0;
    std::int64_t cases = 0;
    double rate = 0.0;
    Interval ci;
};

struct SteerReport {
    std::vector<RelationScore> per_relation;  // first-appearance order
    RelationScore overall;
    std::optional<double> alpha;
};

SteerReport score(std::span<const SteerTrial> trials, double confidence = 0.95);
SteerReport score(std::span<const SteerTrial> trials, std::span<const std::string> relations, double confidence = 0.95);

/// relation,successes,cases,rate_pct,ci_low_pct,ci_high_pct with an Overall row.
void write_steer_report_csv(std::ostream& out, const SteerReport& report, const std::string& provenance = {});

inline constexpr std::uint32_t kStrvVersion = 1;

/// STRV v1: "STRV", u32 version, u32 d, d float32 little-endian.
void write_strv(const Vector& v, std::ostream& out);
void write_strv(const Vector& v, const std::string& path);
Vector read_strv(std::istream& in);
Vector read_strv(const std::string& path);

struct TrialRequest {
    std::int64_t trial_id = 0;
    std::string prompt;
    std::string question;
    std::string target_relation;
    std::int64_t layer = 0;
    double alpha_effective = 0.0;
    std::string vector_ref;
    std::int64_t max_new_tokens = 20;
    std::string decode = "greedy";

    bool operator==(const TrialRequest&) const = default;
};

struct TrialResult {
    std::int64_t trial_id = 0;
    std::string generated_text;
    std::optional<std::string> error;
};

inline constexpr std::string_view kDefaultQuestionTemplate =
    "{prompt} Which direction is the first object from the second? Answer with one word:";

/// One request per (vector, prompt), vector-major; `vector_refs[i]` names the
/// STRV file holding `vectors[i]`. `{prompt}` in the template is substituted.
std::vector<TrialRequest> plan_trials(std::span<const SteeringVector> vectors, std::span<const std::string> vector_refs,
                                      std::span<const std::string> prompts, std::string_view question_template,
                                      std::int64_t max_new_tokens);

std::size_t emit_trial_batch(std::span<const TrialRequest> trials, std::ostream& out);
std::vector<TrialRequest> read_trial_batch(std::istream& in);
std::vector<TrialResult> read_trial_results(std::istream& in);
void write_trial_results(std::span<const TrialResult> results, std::ostream& out);

/// Joins requests and results by trial_id. A result that carries an error or
/// is missing counts as an unmatched trial with empty text.
std::vector<SteerTrial> join_trials(std::span<const TrialRequest> requests, std::span<const TrialResult> results);

}  // namespace spatialprobe
