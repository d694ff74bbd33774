#include <benchmark/benchmark.h>

#include <random>
#include <sstream>

#include "spatialprobe/actstore.hpp"
#include "spatialprobe/corpus.hpp"
#include "spatialprobe/geometry.hpp"
#include "spatialprobe/objmap.hpp"
#include "spatialprobe/probekit.hpp"

using namespace spatialprobe;

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    return Matrix::NullaryExpr(rows, cols, [&] { return normal(rng); });
}

ActivationSet random_set(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
    const auto relations = atomic_relation_ids(Dimensionality::three_d);
    CaptureMeta meta;
    meta.d_model = d;
    std::vector<RowLabel> labels;
    for (Eigen::Index i = 0; i < n; ++i) {
        labels.push_back({i, relations[static_cast<std::size_t>(i) % relations.size()], "cup", "box", Split::train});
    }
    return ActivationSet(gaussian(rng, n, d).cast<float>(), meta, std::move(labels));
}

void BM_TrainLogistic(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const Eigen::Index n = state.range(0), d = state.range(1);
    Matrix x = gaussian(rng, n, d);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        y[static_cast<std::size_t>(i)] = static_cast<int>(i % 6);
        x(i, i % d) += 3.0;
    }
    const std::vector<std::string> classes{"above", "below", "left", "right", "in_front", "behind"};
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.max_epochs = 10;
    for (auto _ : state) benchmark::DoNotOptimize(train_logistic(x, y, classes, cfg));
    state.SetItemsProcessed(state.iterations() * n * cfg.max_epochs);
}
BENCHMARK(BM_TrainLogistic)->Args({2000, 64})->Args({2000, 512})->Unit(benchmark::kMillisecond);

void BM_FitPca(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const Matrix rows = gaussian(rng, state.range(0), state.range(1));
    for (auto _ : state) benchmark::DoNotOptimize(fit_pca(rows, 3, FitPopulation::activations));
}
BENCHMARK(BM_FitPca)->Args({6, 4096})->Args({5000, 256})->Unit(benchmark::kMicrosecond);

void BM_ActfWrite(benchmark::State& state) {
    std::mt19937_64 rng(3);
    const auto set = random_set(rng, state.range(0), state.range(1));
    for (auto _ : state) {
        std::stringstream io;
        benchmark::DoNotOptimize(write_actf(set, io));
    }
    state.SetBytesProcessed(state.iterations() * state.range(0) * state.range(1) * 4);
}
BENCHMARK(BM_ActfWrite)->Args({10000, 256});

void BM_ActfRead(benchmark::State& state) {
    std::mt19937_64 rng(4);
    std::stringstream io;
    write_actf(random_set(rng, state.range(0), state.range(1)), io);
    const std::string bytes = io.str();
    for (auto _ : state) {
        std::istringstream in(bytes);
        benchmark::DoNotOptimize(read_actf(in));
    }
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_ActfRead)->Args({10000, 256});

void BM_Kmeans(benchmark::State& state) {
    std::mt19937_64 rng(5);
    const Matrix points = gaussian(rng, state.range(0), 3);
    for (auto _ : state) benchmark::DoNotOptimize(kmeans(points, static_cast<int>(state.range(1)), 7));
}
BENCHMARK(BM_Kmeans)->Args({5000, 6})->Args({50000, 6})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
