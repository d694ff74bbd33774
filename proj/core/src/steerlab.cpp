#include "spatialprobe/steerlab.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include "spatialprobe/corpus.hpp"

namespace spatialprobe {

std::string_view to_string(AlphaMode m) {
    return m == AlphaMode::absolute ? "absolute" : "relative_to_mean_norm";
}

AlphaMode parse_alpha_mode(std::string_view s) {
    if (s == "absolute") return AlphaMode::absolute;
    if (s == "relative_to_mean_norm" || s == "relative") return AlphaMode::relative_to_mean_norm;
    throw Error(ErrorCode::invalid_argument, "unknown alpha mode: " + std::string(s));
}

double SteeringVector::effective_alpha() const {
    return alpha_mode == AlphaMode::absolute ? alpha : alpha * mean_row_norm;
}

SteeringVector build_steering_vector(const Subspace& s, const Vector& z, std::string relation, std::int64_t layer,
                                     double alpha, AlphaMode mode, std::optional<double> mean_row_norm) {
    if (!std::isfinite(alpha)) throw Error(ErrorCode::invalid_argument, "alpha must be finite");
    if (mode == AlphaMode::relative_to_mean_norm && (!mean_row_norm || !(*mean_row_norm > 0.0))) {
        throw Error(ErrorCode::invalid_argument, "relative alpha mode needs a positive mean_row_norm");
    }
    const Vector direction = reconstruct(s, z) - s.mean;
    const double n = direction.norm();
    if (n == 0.0) throw Error(ErrorCode::numeric, "steering direction reconstructs to zero");
    SteeringVector out;
    out.relation = std::move(relation);
    out.layer = layer;
    out.v = direction / n;
    out.alpha = alpha;
    out.alpha_mode = mode;
    out.mean_row_norm = mean_row_norm.value_or(0.0);
    return out;
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string strip_punct(std::string_view tok) {
    std::size_t b = 0;
    std::size_t e = tok.size();
    while (b < e && !std::isalnum(static_cast<unsigned char>(tok[b]))) ++b;
    while (e > b && !std::isalnum(static_cast<unsigned char>(tok[e - 1]))) --e;
    return std::string(tok.substr(b, e - b));
}

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    std::string tok;
    while (in >> tok) out.push_back(std::move(tok));
    return out;
}

std::string_view atomic_keyword(std::string_view id) {
    if (id == "above") return "above";
    if (id == "below") return "below";
    if (id == "left") return "left";
    if (id == "right") return "right";
    if (id == "in_front") return "front";
    if (id == "behind") return "behind";
    throw Error(ErrorCode::not_found, "no match lexicon for relation: " + std::string(id));
}

bool contains_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase) {
    if (phrase.empty() || phrase.size() > tokens.size()) return false;
    for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
        if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) return true;
    }
    return false;
}

}  // namespace

std::vector<std::string> match_lexicon(std::string_view relation) {
    const auto& spec = relation_or_throw(relation);
    if (spec.kind == RelationKind::atomic) return {std::string(atomic_keyword(spec.id))};
    std::vector<std::string> out;
    for (const auto& p : spec.parts) out.emplace_back(atomic_keyword(p));
    return out;
}

bool lexical_match(std::string_view text, std::string_view relation) {
    auto raw = split_ws(text);
    if (raw.size() > kMatchWindowTokens) raw.resize(kMatchWindowTokens);
    std::vector<std::string> tokens;
    tokens.reserve(raw.size());
    for (const auto& t : raw) tokens.push_back(strip_punct(lower(t)));
    for (const auto& keyword : match_lexicon(relation)) {
        if (!contains_phrase(tokens, split_ws(lower(keyword)))) return false;
    }
    return true;
}

Interval wilson_ci(std::int64_t successes, std::int64_t n, double confidence) {
    if (n < 1) throw Error(ErrorCode::invalid_argument, "wilson_ci: n must be >= 1");
    if (successes < 0 || successes > n) throw Error(ErrorCode::invalid_argument, "wilson_ci: successes out of range");
    if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorCode::invalid_argument, "confidence must be in (0,1)");
    const boost::math::normal_distribution<double> normal;
    const double z = boost::math::quantile(normal, 1.0 - (1.0 - confidence) / 2.0);
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(successes) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = p + z2 / (2.0 * nn);
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    Interval ci{(center - half) / denom, (center + half) / denom};
    ci.low = std::clamp(ci.low, 0.0, p);
    ci.high = std::clamp(ci.high, p, 1.0);
    return ci;
}

SteerTrial make_trial(std::string prompt, std::string target_relation, std::string generated) {
    SteerTrial t;
    t.matched = lexical_match(generated, target_relation);
    t.prompt = std::move(prompt);
    t.target_relation = std::move(target_relation);
    t.generated = std::move(generated);
    return t;
}

namespace {

RelationScore make_score(std::string relation, std::int64_t successes, std::int64_t cases, double confidence) {
    RelationScore s;
    s.relation = std::move(relation);
    s.successes = successes;
    s.cases = cases;
    s.rate = static_cast<double>(successes) / static_cast<double>(cases);
    s.ci = wilson_ci(successes, cases, confidence);
    return s;
}

}  // namespace

SteerReport score(std::span<const SteerTrial> trials, double confidence) {
    std::vector<std::string> order;
    for (const auto& t : trials) {
        if (std::find(order.begin(), order.end(), t.target_relation) == order.end()) order.push_back(t.target_relation);
    }
    return score(trials, order, confidence);
}

SteerReport score(std::span<const SteerTrial> trials, std::span<const std::string> relations, double confidence) {
    if (relations.empty()) throw Error(ErrorCode::invalid_argument, "score: no relations to report");
    std::map<std::string, std::pair<std::int64_t, std::int64_t>> tally;
    for (const auto& t : trials) {
        auto& [succ, cases] = tally[t.target_relation];
        ++cases;
        if (t.matched) ++succ;
    }
    SteerReport r;
    std::int64_t total_s = 0;
    std::int64_t total_n = 0;
    for (const auto& rel : relations) {
        const auto it = tally.find(rel);
        if (it == tally.end() || it->second.second == 0) {
            throw Error(ErrorCode::invalid_argument, "score: no trials for relation " + rel);
        }
        r.per_relation.push_back(make_score(rel, it->second.first, it->second.second, confidence));
        total_s += it->second.first;
        total_n += it->second.second;
    }
    r.overall = make_score("overall", total_s, total_n, confidence);
    return r;
}

void write_steer_report_csv(std::ostream& out, const SteerReport& report, const std::string& provenance) {
    if (!provenance.empty()) out << "# " << provenance << '\n';
    if (report.alpha) out << "# alpha=" << *report.alpha << '\n';
    out << "relation,successes,cases,rate_pct,ci_low_pct,ci_high_pct\n";
    const auto row = [&](const RelationScore& s, std::string_view name) {
        out << name << ',' << s.successes << ',' << s.cases << ',' << std::fixed << std::setprecision(1)
            << 100.0 * s.rate << ',' << 100.0 * s.ci.low << ',' << 100.0 * s.ci.high << '\n';
        out.unsetf(std::ios::floatfield);
    };
    for (const auto& s : report.per_relation) row(s, s.relation);
    row(report.overall, "Overall");
}

void write_strv(const Vector& v, std::ostream& out) {
    if (!v.allFinite()) throw Error(ErrorCode::numeric, "STRV vector must be finite");
    std::string buf = "STRV";
    const auto put = [&](std::uint32_t x) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
    };
    put(kStrvVersion);
    put(static_cast<std::uint32_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) put(std::bit_cast<std::uint32_t>(static_cast<float>(v(i))));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error(ErrorCode::io, "STRV write failed");
}

void write_strv(const Vector& v, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::io, "cannot open for writing: " + path);
    write_strv(v, f);
}

Vector read_strv(std::istream& in) {
    const auto get = [&]() {
        std::array<unsigned char, 4> b{};
        in.read(reinterpret_cast<char*>(b.data()), 4);
        if (in.gcount() != 4) throw Error(ErrorCode::format, "STRV truncated");
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (in.gcount() != 4 || std::string_view(magic.data(), 4) != "STRV") throw Error(ErrorCode::format, "STRV bad magic");
    const auto version = get();
    if (version != kStrvVersion) throw Error(ErrorCode::format, "STRV unsupported version " + std::to_string(version));
    const auto d = get();
    std::vector<double> values;
    values.reserve(std::min<std::uint32_t>(d, 1u << 20));
    for (std::uint32_t i = 0; i < d; ++i) values.push_back(static_cast<double>(std::bit_cast<float>(get())));
    const Vector v = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
    if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::format, "STRV trailing bytes");
    return v;
}

Vector read_strv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::io, "cannot open STRV file: " + path);
    return read_strv(f);
}

std::vector<TrialRequest> plan_trials(std::span<const SteeringVector> vectors, std::span<const std::string> vector_refs,
                                      std::span<const std::string> prompts, std::string_view question_template,
                                      std::int64_t max_new_tokens) {
    if (prompts.empty()) throw Error(ErrorCode::invalid_argument, "trial batch needs at least one prompt");
    if (vectors.empty()) throw Error(ErrorCode::invalid_argument, "trial batch needs at least one steering vector");
    if (vectors.size() != vector_refs.size()) throw Error(ErrorCode::invalid_argument, "one vector_ref per vector");
    if (max_new_tokens < 1) throw Error(ErrorCode::invalid_argument, "max_new_tokens must be >= 1");
    std::vector<TrialRequest> out;
    std::int64_t id = 0;
    for (std::size_t v = 0; v < vectors.size(); ++v) {
        const auto& sv = vectors[v];
        if (std::abs(sv.v.norm() - 1.0) > 1e-6) throw Error(ErrorCode::invalid_argument, "steering vector is not unit norm");
        for (const auto& prompt : prompts) {
            TrialRequest t;
            t.trial_id = id++;
            t.prompt = prompt;
            std::string q(question_template);
            const auto pos = q.find("{prompt}");
            if (pos != std::string::npos) q.replace(pos, 8, prompt);
            t.question = std::move(q);
            t.target_relation = sv.relation;
            t.layer = sv.layer;
            t.alpha_effective = sv.effective_alpha();
            t.vector_ref = vector_refs[v];
            t.max_new_tokens = max_new_tokens;
            out.push_back(std::move(t));
        }
    }
    return out;
}

std::size_t emit_trial_batch(std::span<const TrialRequest> trials, std::ostream& out) {
    if (trials.empty()) throw Error(ErrorCode::invalid_argument, "empty trial batch");
    std::size_t lines = 0;
    for (const auto& t : trials) {
        nlohmann::ordered_json j;
        j["trial_id"] = t.trial_id;
        j["prompt"] = t.prompt;
        j["question"] = t.question;
        j["target_relation"] = t.target_relation;
        j["layer"] = t.layer;
        j["alpha_effective"] = t.alpha_effective;
        j["vector_ref"] = t.vector_ref;
        j["max_new_tokens"] = t.max_new_tokens;
        j["decode"] = t.decode;
        out << j.dump() << '\n';
        ++lines;
    }
    if (!out) throw Error(ErrorCode::io, "trial batch write failed");
    return lines;
}

std::vector<TrialRequest> read_trial_batch(std::istream& in) {
    std::vector<TrialRequest> out;
    std::string line;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            TrialRequest t;
            t.trial_id = j.at("trial_id").get<std::int64_t>();
            t.prompt = j.at("prompt").get<std::string>();
            t.question = j.at("question").get<std::string>();
            t.target_relation = j.at("target_relation").get<std::string>();
            t.layer = j.at("layer").get<std::int64_t>();
            t.alpha_effective = j.at("alpha_effective").get<double>();
            t.vector_ref = j.at("vector_ref").get<std::string>();
            t.max_new_tokens = j.at("max_new_tokens").get<std::int64_t>();
            t.decode = j.at("decode").get<std::string>();
            out.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format, std::string("bad trial batch line: ") + e.what());
    }
    return out;
}

std::vector<TrialResult> read_trial_results(std::istream& in) {
    std::vector<TrialResult> out;
    std::string line;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            TrialResult r;
            r.trial_id = j.at("trial_id").get<std::int64_t>();
            if (j.contains("generated_text") && !j.at("generated_text").is_null()) {
                r.generated_text = j.at("generated_text").get<std::string>();
            }
            if (j.contains("error") && !j.at("error").is_null()) r.error = j.at("error").get<std::string>();
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format, std::string("bad trial result line: ") + e.what());
    }
    return out;
}

void write_trial_results(std::span<const TrialResult> results, std::ostream& out) {
    for (const auto& r : results) {
        nlohmann::ordered_json j;
        j["trial_id"] = r.trial_id;
        j["generated_text"] = r.generated_text;
        if (r.error) j["error"] = *r.error;
        out << j.dump() << '\n';
    }
}

std::vector<SteerTrial> join_trials(std::span<const TrialRequest> requests, std::span<const TrialResult> results) {
    std::map<std::int64_t, const TrialResult*> by_id;
    for (const auto& r : results) {
        if (!by_id.emplace(r.trial_id, &r).second) {
            throw Error(ErrorCode::format, "duplicate trial_id in results: " + std::to_string(r.trial_id));
        }
    }
    std::vector<SteerTrial> out;
    out.reserve(requests.size());
    for (const auto& req : requests) {
        const auto it = by_id.find(req.trial_id);
        std::string text;
        if (it != by_id.end() && !it->second->error) text = it->second->generated_text;
        out.push_back(make_trial(req.question, req.target_relation, std::move(text)));
    }
    return out;
}

}  // namespace spatialprobe
