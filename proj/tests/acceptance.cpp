// Prints one PASS/FAIL line per acceptance criterion; exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spatialprobe/actstore.hpp"
#include "spatialprobe/geometry.hpp"
#include "spatialprobe/pipeline.hpp"
#include "spatialprobe/probekit.hpp"
#include "spatialprobe/steerlab.hpp"
#include "test_support.hpp"

using namespace spatialprobe;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

bool near_pct(double value, double target_pct, double tol_pp) { return std::abs(100.0 * value - target_pct) <= tol_pp; }

std::string pct(const Interval& ci) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "[%.2f, %.2f]", 100.0 * ci.low, 100.0 * ci.high);
    return buf;
}

Outcome wilson_rows() {
    const struct {
        int s;
        double lo, hi;
    } rows[] = {{100, 96.3, 100.0}, {79, 70.0, 85.8}, {5, 2.2, 11.2}};
    Outcome o{true, {}};
    for (const auto& r : rows) {
        const auto ci = wilson_ci(r.s, 100);
        o.pass = o.pass && near_pct(ci.low, r.lo, 0.1) && near_pct(ci.high, r.hi, 0.1);
        o.detail += std::to_string(r.s) + "/100 " + pct(ci) + " ";
    }
    return o;
}

Outcome pooled_overall() {
    std::vector<SteerTrial> trials;
    const std::pair<const char*, int> rows[] = {{"above", 100}, {"below", 98}, {"left", 79},
                                                {"right", 80},  {"in_front", 84}, {"behind", 5}};
    for (const auto& [rel, s] : rows) {
        for (int i = 0; i < 100; ++i) trials.push_back(make_trial("p", rel, i < s ? match_lexicon(rel)[0] : "none"));
    }
    const auto r = score(trials);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%lld/%lld = %.2f%% CI %s", static_cast<long long>(r.overall.successes),
                  static_cast<long long>(r.overall.cases), 100.0 * r.overall.rate, pct(r.overall.ci).c_str());
    const bool ok = r.overall.successes == 446 && r.overall.cases == 600 && near_pct(r.overall.rate, 74.3, 0.05) &&
                    near_pct(r.overall.ci.low, 70.8, 0.2) && near_pct(r.overall.ci.high, 77.8, 0.2);
    return {ok, buf};
}

std::string failed_checks(const SynthRunResult& r) {
    std::string s;
    for (const auto& c : r.checks) {
        if (!c.pass) s += c.name + "=" + std::to_string(c.value) + " ";
    }
    return s;
}

Outcome synth_ideal() {
    const auto r = run_synth(SynthRunConfig{});
    double inv_min = 1.0, comp_min = 1.0;
    for (const auto& row : r.inverse_rows) inv_min = std::min(inv_min, row.cosine);
    for (const auto& row : r.composition_rows) comp_min = std::min(comp_min, row.cosine);
    std::ostringstream d;
    d.precision(12);
    d << "acc=" << r.probe_accuracy << " inverse_min=" << inv_min << " composition_min=" << comp_min
      << " purity=" << r.cluster.purity << " ve3=" << r.variance_explained3 << " seconds=" << r.seconds << ' '
      << failed_checks(r);
    const bool ok = r.all_pass() && r.probe_accuracy == 1.0 && std::abs(inv_min - 1.0) <= 1e-6 &&
                    std::abs(comp_min - 1.0) <= 1e-6 && r.cluster.purity == 1.0 &&
                    std::abs(r.variance_explained3 - 1.0) <= 1e-9 && r.seconds < 300.0;
    return {ok, d.str()};
}

Outcome synth_noisy() {
    SynthRunConfig cfg;
    cfg.synth.noise_sigma = 0.1;
    cfg.synth.n_distractors = 8;
    const auto r = run_synth(cfg);
    double comp_pca = 1.0;
    for (const auto& row : r.composition_rows) {
        if (row.space == Space::pca && row.pair_or_relation != "mean") comp_pca = std::min(comp_pca, row.cosine);
    }
    std::ostringstream d;
    d.precision(6);
    d << "n=" << r.corpus.records.size() << " acc=" << r.probe_accuracy << " subspace_deg=" << r.subspace_error_deg
      << " composition_pca_min=" << comp_pca << " purity=" << r.cluster.purity << ' ' << failed_checks(r);
    const bool ok = r.corpus.records.size() >= 5000 && r.probe_accuracy >= 0.99 && r.subspace_error_deg < 5.0 &&
                    comp_pca >= 0.98 && r.cluster.purity >= 0.95;
    return {ok, d.str()};
}

Outcome probe_direction_identity() {
    std::mt19937_64 rng(20240601);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index d = 20, n = 500;
    Vector mu = Vector::NullaryExpr(d, [&] { return normal(rng); });
    mu *= 1.5 / mu.norm();
    Matrix x(2 * n, d);
    std::vector<int> y(static_cast<std::size_t>(2 * n));
    for (Eigen::Index i = 0; i < 2 * n; ++i) {
        const int c = i < n ? 0 : 1;
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = normal(rng) + (c == 0 ? mu(j) : -mu(j));
        y[static_cast<std::size_t>(i)] = c;
    }
    TrainConfig cfg;
    cfg.seed = 5;
    cfg.learning_rate = 0.05;
    cfg.max_epochs = 60;
    const auto probe = train_logistic(x, y, {"above", "below"}, cfg);
    const Vector diff = x.topRows(n).colwise().mean().transpose() - x.bottomRows(n).colwise().mean().transpose();
    const double c = cosine(probe_direction(probe, "above"), diff);
    return {c >= 0.95, "cosine=" + std::to_string(c)};
}

Outcome gradient_check() {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const Eigen::Index n = 5 + inst % 4, d = 3 + inst % 3, c = 2 + inst % 3;
        const auto mode = inst % 2 ? ProbeMode::multiclass : ProbeMode::one_vs_rest;
        const Matrix x = Matrix::NullaryExpr(n, d, [&] { return normal(rng); });
        std::vector<int> y(static_cast<std::size_t>(n));
        for (auto& v : y) v = static_cast<int>(rng() % static_cast<std::uint64_t>(c));
        const Matrix w = Matrix::NullaryExpr(c, d, [&] { return 0.5 * normal(rng); });
        const Vector b = Vector::NullaryExpr(c, [&] { return 0.5 * normal(rng); });
        const auto g = logistic_loss_grad(w, b, x, y, mode);
        const double h = 1e-6;
        const auto rel = [](double a, double e) { return std::abs(a - e) / std::max({1e-8, std::abs(a), std::abs(e)}); };
        for (Eigen::Index i = 0; i < c; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) {
                Matrix wp = w, wm = w;
                wp(i, j) += h;
                wm(i, j) -= h;
                const double num = (logistic_loss_grad(wp, b, x, y, mode).loss - logistic_loss_grad(wm, b, x, y, mode).loss) / (2 * h);
                worst = std::max(worst, rel(g.grad_w(i, j), num));
            }
            Vector bp = b, bm = b;
            bp(i) += h;
            bm(i) -= h;
            const double num = (logistic_loss_grad(w, bp, x, y, mode).loss - logistic_loss_grad(w, bm, x, y, mode).loss) / (2 * h);
            worst = std::max(worst, rel(g.grad_b(i), num));
        }
    }
    return {worst < 1e-4, "max relative error=" + std::to_string(worst)};
}

Outcome boundary_pairs() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    double worst = 0.0;
    bool sides = true;
    for (int i = 0; i < 1000; ++i) {
        const Vector z1{{u(rng), u(rng)}};
        Vector z2{{u(rng), u(rng)}};
        if (z1 == z2) z2(0) += 1.0;
        const auto line = decision_boundary(z1, z2);
        worst = std::max(worst, std::abs(line.side(line.point)));
        sides = sides && line.side(z1) > 0.0 && line.side(z2) < 0.0;
    }
    return {worst <= 1e-12 && sides, "max residual=" + std::to_string(worst) + (sides ? " sides ok" : " side violation")};
}

Outcome actf_round_trips() {
    std::mt19937_64 rng(31337);
    int ok = 0;
    for (int t = 0; t < 100; ++t) {
        const auto set = testing::random_activation_set(rng, 1 + rng() % 50, static_cast<std::int64_t>(1 + rng() % 32));
        std::stringstream io;
        write_actf(set, io);
        const auto back = read_actf(io);
        const bool same = back.meta() == set.meta() && back.labels() == set.labels() &&
                          back.data().rows() == set.data().rows() && back.data().cols() == set.data().cols() &&
                          std::memcmp(back.data().data(), set.data().data(), sizeof(float) * set.data().size()) == 0;
        ok += same ? 1 : 0;
    }
    return {ok == 100, std::to_string(ok) + "/100 bit-exact"};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"wilson_interval_reproduction", wilson_rows},
        {"overall_pooled_ci", pooled_overall},
        {"synthetic_oracle_noiseless", synth_ideal},
        {"synthetic_oracle_noisy_distractors", synth_noisy},
        {"probe_direction_identity", probe_direction_identity},
        {"logistic_gradient_check", gradient_check},
        {"decision_boundary_pairs", boundary_pairs},
        {"actf_round_trip", actf_round_trips},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures;
}
