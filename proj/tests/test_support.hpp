#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "spatialprobe/actstore.hpp"
#include "spatialprobe/corpus.hpp"

namespace spatialprobe::testing {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("spatialprobe_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline ActivationSet random_activation_set(std::mt19937_64& rng, std::size_t n, std::int64_t d) {
    std::normal_distribution<float> normal(0.0f, 3.0f);
    const auto atomics = atomic_relation_ids(Dimensionality::three_d);
    FloatMatrix data(static_cast<Eigen::Index>(n), d);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.cols(); ++j) data(i, j) = normal(rng);
    }
    std::vector<RowLabel> labels;
    for (std::size_t i = 0; i < n; ++i) {
        labels.push_back({static_cast<std::int64_t>(i), atomics[rng() % atomics.size()], "obj" + std::to_string(rng() % 7),
                          "noun \"" + std::to_string(rng() % 5) + "\"", rng() % 2 ? Split::train : Split::test});
    }
    CaptureMeta meta;
    meta.model_id = "model-" + std::to_string(rng() % 1000);
    meta.layer = static_cast<std::int64_t>(rng() % 32);
    meta.token_strategy = rng() % 2 ? TokenStrategy::final_token_before_period : TokenStrategy::entity_span_mean;
    meta.d_model = d;
    meta.mean_row_norm = mean_row_norm(data);
    meta.capture_seed = rng();
    return ActivationSet(std::move(data), std::move(meta), std::move(labels));
}

}  // namespace spatialprobe::testing
