#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "spatialprobe/steerlab.hpp"
#include "test_support.hpp"

using namespace spatialprobe;
using spatialprobe::testing::TempDir;

namespace {

// Closed-form Wilson interval evaluated in long double.
std::pair<long double, long double> wilson_oracle(long double s, long double n) {
    const long double z = 1.959963984540054L;
    const long double p = s / n;
    const long double z2 = z * z;
    const long double center = (p + z2 / (2 * n)) / (1 + z2 / n);
    const long double half = z / (1 + z2 / n) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
    return {center - half, center + half};
}

// Text that satisfies the lexicon for a relation.
std::string lexical_form(const std::string& relation) {
    std::string out;
    for (const auto& k : match_lexicon(relation)) out += k + " and ";
    return out;
}

std::vector<SteerTrial> trials_for(const std::string& relation, int successes, int cases) {
    std::vector<SteerTrial> out;
    for (int i = 0; i < cases; ++i) {
        out.push_back(make_trial("p", relation, i < successes ? "It is " + lexical_form(relation) : "It is nowhere"));
    }
    return out;
}

Subspace axis_subspace(Eigen::Index d, Eigen::Index k) {
    Subspace s;
    s.mean = Vector::Zero(d);
    s.components = Matrix::Identity(d, d).topRows(k);
    s.eigenvalues = Vector::Ones(k);
    s.variance_explained = Vector::Constant(k, 1.0 / static_cast<double>(k));
    return s;
}

}  // namespace

TEST(Wilson, SteeringTableRows) {
    const auto full = wilson_ci(100, 100);
    EXPECT_NEAR(100 * full.low, 96.3, 0.1);
    EXPECT_NEAR(100 * full.high, 100.0, 0.1);
    const auto mid = wilson_ci(79, 100);
    EXPECT_NEAR(100 * mid.low, 70.0, 0.1);
    EXPECT_NEAR(100 * mid.high, 85.8, 0.1);
    const auto low = wilson_ci(5, 100);
    EXPECT_NEAR(100 * low.low, 2.2, 0.1);
    EXPECT_NEAR(100 * low.high, 11.2, 0.1);
}

TEST(Wilson, MatchesHighPrecisionClosedForm) {
    for (int n = 1; n <= 60; ++n) {
        for (int s = 0; s <= n; ++s) {
            const auto ci = wilson_ci(s, n);
            const auto [lo, hi] = wilson_oracle(s, n);
            EXPECT_NEAR(ci.low, std::max(0.0L, lo), 1e-12) << s << "/" << n;
            EXPECT_NEAR(ci.high, std::min(1.0L, hi), 1e-12) << s << "/" << n;
        }
    }
    const auto half = wilson_ci(1, 2);
    const auto [lo, hi] = wilson_oracle(1, 2);
    EXPECT_NEAR(half.low, lo, 1e-14);
    EXPECT_NEAR(half.high, hi, 1e-14);
}

TEST(Wilson, BracketsTheRateAndNarrowsWithN) {
    for (int n = 1; n <= 200; ++n) {
        for (int s = 0; s <= n; ++s) {
            const auto ci = wilson_ci(s, n);
            const double p = static_cast<double>(s) / n;
            EXPECT_LE(0.0, ci.low);
            EXPECT_LE(ci.low, p);
            EXPECT_LE(p, ci.high);
            EXPECT_LE(ci.high, 1.0);
            if (s > 0) EXPECT_GT(ci.low, 0.0);
        }
    }
    for (int s : {1, 3, 7}) {
        double prev = 2.0;
        for (int scale = 1; scale <= 50; ++scale) {
            const auto ci = wilson_ci(s * scale, 10 * scale);
            const double width = ci.high - ci.low;
            EXPECT_LT(width, prev);
            prev = width;
        }
    }
}

TEST(Wilson, Preconditions) {
    EXPECT_THROW(wilson_ci(0, 0), Error);
    EXPECT_THROW(wilson_ci(5, 4), Error);
    EXPECT_THROW(wilson_ci(-1, 4), Error);
    EXPECT_THROW(wilson_ci(1, 4, 1.0), Error);
    EXPECT_LT(wilson_ci(5, 10, 0.99).low, wilson_ci(5, 10, 0.9).low);
}

TEST(LexicalMatch, Examples) {
    EXPECT_TRUE(lexical_match("It is above the box", "above"));
    EXPECT_FALSE(lexical_match("to the right", "left"));
    EXPECT_TRUE(lexical_match("In FRONT of it", "in_front"));
    EXPECT_TRUE(lexical_match("Left.", "left"));
    EXPECT_FALSE(lexical_match("leftover soup", "left"));
    EXPECT_FALSE(lexical_match("", "behind"));
    EXPECT_TRUE(lexical_match("above, and to the left", "above_left"));
    EXPECT_FALSE(lexical_match("above only", "above_left"));
}

TEST(LexicalMatch, OnlyTheFirstTwentyTokensCount) {
    std::string text;
    for (int i = 0; i < 19; ++i) text += "word ";
    EXPECT_TRUE(lexical_match(text + "below", "below"));
    EXPECT_FALSE(lexical_match(text + "word below", "below"));
}

TEST(LexicalMatch, CaseInvariant) {
    std::mt19937_64 rng(1);
    const std::string base = "the lamp is BEHIND and above the left chair, in front";
    for (int trial = 0; trial < 50; ++trial) {
        std::string t = base;
        for (auto& c : t) {
            if (rng() % 2) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            else c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        for (const char* rel : {"above", "below", "left", "right", "in_front", "behind"}) {
            EXPECT_EQ(lexical_match(t, rel), lexical_match(base, rel)) << t << " " << rel;
        }
    }
    EXPECT_THROW(lexical_match("x", "inside"), Error);
}

TEST(Score, PooledOverallRow) {
    std::vector<SteerTrial> trials;
    const std::vector<std::pair<std::string, int>> rows{{"above", 100}, {"below", 98}, {"left", 79},
                                                        {"right", 80}, {"in_front", 84}, {"behind", 5}};
    for (const auto& [rel, s] : rows) {
        const auto part = trials_for(rel, s, 100);
        trials.insert(trials.end(), part.begin(), part.end());
    }
    const auto report = score(trials);
    EXPECT_EQ(report.overall.successes, 446);
    EXPECT_EQ(report.overall.cases, 600);
    EXPECT_NEAR(100 * report.overall.rate, 74.3, 0.05);
    EXPECT_NEAR(100 * report.overall.ci.low, 70.8, 0.2);
    EXPECT_NEAR(100 * report.overall.ci.high, 77.8, 0.2);
    ASSERT_EQ(report.per_relation.size(), 6u);
    std::int64_t s = 0, n = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(report.per_relation[i].relation, rows[i].first);
        EXPECT_EQ(report.per_relation[i].successes, rows[i].second);
        s += report.per_relation[i].successes;
        n += report.per_relation[i].cases;
    }
    EXPECT_EQ(s, report.overall.successes);
    EXPECT_EQ(n, report.overall.cases);
}

TEST(Score, AlternatingHalf) {
    std::vector<SteerTrial> trials;
    for (int i = 0; i < 100; ++i) trials.push_back(make_trial("p", "left", i % 2 ? "left" : "right"));
    const auto r = score(trials);
    EXPECT_DOUBLE_EQ(r.overall.rate, 0.5);
    EXPECT_NEAR(100 * r.overall.ci.low, 40.4, 0.05);
    EXPECT_NEAR(100 * r.overall.ci.high, 59.6, 0.05);
}

TEST(Score, EmptyBucketIsRejected) {
    const auto trials = trials_for("above", 3, 3);
    const std::vector<std::string> rels{"above", "below"};
    EXPECT_THROW(score(trials, rels), Error);
    EXPECT_THROW(score(std::span<const SteerTrial>()), Error);
}

TEST(Score, CsvLayout) {
    auto trials = trials_for("above", 100, 100);
    const auto more = trials_for("behind", 5, 100);
    trials.insert(trials.end(), more.begin(), more.end());
    auto report = score(trials);
    report.alpha = 4.0;
    std::ostringstream out;
    write_steer_report_csv(out, report, "config_hash=01 seed=2");
    EXPECT_EQ(out.str(),
              "# config_hash=01 seed=2\n"
              "# alpha=4\n"
              "relation,successes,cases,rate_pct,ci_low_pct,ci_high_pct\n"
              "above,100,100,100.0,96.3,100.0\n"
              "behind,5,100,5.0,2.2,11.2\n"
              "Overall,105,200,52.5,45.6,59.3\n");
}

TEST(SteeringVector, AxisDirectionAndNormalization) {
    const auto s = axis_subspace(5, 3);
    const auto v = build_steering_vector(s, Vector::Unit(3, 0), "left", 16, 2.0, AlphaMode::absolute);
    EXPECT_EQ(v.v, s.components.row(0).transpose());
    EXPECT_DOUBLE_EQ(v.effective_alpha(), 2.0);
    EXPECT_EQ(v.apply(Vector::Zero(5)), 2.0 * v.v);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const Vector z = Vector::NullaryExpr(3, [&] { return normal(rng); });
        const auto a = build_steering_vector(s, z, "left", 16, 1.0, AlphaMode::relative_to_mean_norm, 10.0);
        const auto b = build_steering_vector(s, 7.5 * z, "left", 16, 1.0, AlphaMode::relative_to_mean_norm, 10.0);
        EXPECT_NEAR(a.v.norm(), 1.0, 1e-9);
        EXPECT_LT((a.v - b.v).norm(), 1e-12);
        EXPECT_DOUBLE_EQ(a.effective_alpha(), 10.0);
    }
}

TEST(SteeringVector, Errors) {
    const auto s = axis_subspace(4, 2);
    EXPECT_THROW(build_steering_vector(s, Vector::Zero(2), "left", 0, 1.0, AlphaMode::absolute), Error);
    EXPECT_THROW(build_steering_vector(s, Vector::Ones(2), "left", 0, 1.0, AlphaMode::relative_to_mean_norm), Error);
    EXPECT_THROW(build_steering_vector(s, Vector::Ones(2), "left", 0, 1.0, AlphaMode::relative_to_mean_norm, 0.0), Error);
    EXPECT_THROW(build_steering_vector(s, Vector::Ones(3), "left", 0, 1.0, AlphaMode::absolute), Error);
    EXPECT_EQ(parse_alpha_mode(to_string(AlphaMode::absolute)), AlphaMode::absolute);
    EXPECT_THROW(parse_alpha_mode("sideways"), Error);
}

TEST(Strv, RoundTripAndErrors) {
    TempDir dir;
    const Vector v{{0.25, -1.5, 3.0}};
    write_strv(v, dir.file("v.strv"));
    EXPECT_EQ(std::filesystem::file_size(dir.file("v.strv")), 12u + 12u);
    EXPECT_EQ(read_strv(dir.file("v.strv")), v);

    std::ostringstream out;
    write_strv(v, out);
    const auto bytes = out.str();
    const auto bad = [](const std::string& b) {
        std::istringstream in(b);
        try {
            read_strv(in);
        } catch (const Error& e) {
            return e.code() == ErrorCode::format;
        }
        return false;
    };
    EXPECT_TRUE(bad("XTRV" + bytes.substr(4)));
    EXPECT_TRUE(bad(bytes.substr(0, bytes.size() - 1)));
    EXPECT_TRUE(bad(bytes + "z"));
    EXPECT_THROW(write_strv(Vector{{NAN}}, out), Error);
    EXPECT_THROW(read_strv(dir.file("none.strv")), Error);
}

TEST(TrialBatch, SixRelationsTimesHundredPrompts) {
    const auto s = axis_subspace(6, 3);
    std::vector<SteeringVector> vectors;
    std::vector<std::string> refs;
    const std::vector<std::string> relations{"above", "below", "left", "right", "in_front", "behind"};
    for (std::size_t i = 0; i < relations.size(); ++i) {
        Vector z = Vector::Zero(3);
        z(static_cast<Eigen::Index>(i / 2)) = i % 2 ? -1.0 : 1.0;
        vectors.push_back(build_steering_vector(s, z, relations[i], 16, 2.0, AlphaMode::relative_to_mean_norm, 1.5));
        refs.push_back("steer_" + relations[i] + ".strv");
    }
    std::vector<std::string> prompts;
    for (int i = 0; i < 100; ++i) prompts.push_back("The cup is left of box" + std::to_string(i) + ".");
    const auto plan = plan_trials(vectors, refs, prompts, kDefaultQuestionTemplate, 20);
    ASSERT_EQ(plan.size(), 600u);
    EXPECT_EQ(plan[0].question,
              "The cup is left of box0. Which direction is the first object from the second? Answer with one word:");
    EXPECT_EQ(plan[100].target_relation, "below");
    EXPECT_EQ(plan[599].trial_id, 599);
    EXPECT_DOUBLE_EQ(plan[5].alpha_effective, 3.0);

    std::stringstream io;
    EXPECT_EQ(emit_trial_batch(plan, io), 600u);
    EXPECT_EQ(read_trial_batch(io), plan);

    EXPECT_THROW(plan_trials(vectors, refs, {}, kDefaultQuestionTemplate, 20), Error);
    EXPECT_THROW(emit_trial_batch({}, io), Error);
}

TEST(TrialBatch, FieldOrder) {
    TrialRequest t;
    t.trial_id = 3;
    t.prompt = "P";
    t.question = "Q";
    t.target_relation = "left";
    t.layer = 16;
    t.alpha_effective = 0.5;
    t.vector_ref = "v.strv";
    std::ostringstream out;
    emit_trial_batch(std::span<const TrialRequest>(&t, 1), out);
    EXPECT_EQ(out.str(),
              "{\"trial_id\":3,\"prompt\":\"P\",\"question\":\"Q\",\"target_relation\":\"left\",\"layer\":16,"
              "\"alpha_effective\":0.5,\"vector_ref\":\"v.strv\",\"max_new_tokens\":20,\"decode\":\"greedy\"}\n");
}

TEST(TrialResults, JoinTreatsErrorsAndGapsAsMisses) {
    std::vector<TrialRequest> reqs(3);
    for (std::int64_t i = 0; i < 3; ++i) {
        reqs[static_cast<std::size_t>(i)].trial_id = i;
        reqs[static_cast<std::size_t>(i)].target_relation = "left";
        reqs[static_cast<std::size_t>(i)].question = "q" + std::to_string(i);
    }
    std::stringstream io("{\"trial_id\":0,\"generated_text\":\"Left\"}\n"
                         "{\"trial_id\":1,\"generated_text\":\"left\",\"error\":\"oom\"}\n");
    const auto results = read_trial_results(io);
    const auto joined = join_trials(reqs, results);
    ASSERT_EQ(joined.size(), 3u);
    EXPECT_TRUE(joined[0].matched);
    EXPECT_FALSE(joined[1].matched);
    EXPECT_FALSE(joined[2].matched);
    EXPECT_EQ(joined[2].prompt, "q2");

    std::stringstream rt;
    write_trial_results(results, rt);
    const auto back = read_trial_results(rt);
    EXPECT_EQ(back[1].error, std::optional<std::string>("oom"));

    const std::vector<TrialResult> dup{{0, "a", {}}, {0, "b", {}}};
    EXPECT_THROW(join_trials(reqs, dup), Error);
    std::stringstream junk("not json\n");
    EXPECT_THROW(read_trial_results(junk), Error);
}
