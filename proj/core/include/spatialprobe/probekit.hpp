#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spatialprobe/actstore.hpp"
#include "spatialprobe/common.hpp"

namespace spatialprobe {

enum class ProbeObjective { least_squares, logistic };
enum class ProbeMode { multiclass, one_vs_rest };
enum class OptimizerKind { sgd, adam };

std::string_view to_string(ProbeObjective o);
std::string_view to_string(ProbeMode m);
std::string_view to_string(OptimizerKind o);
ProbeObjective parse_probe_objective(std::string_view s);
ProbeMode parse_probe_mode(std::string_view s);
OptimizerKind parse_optimizer(std::string_view s);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 64;
    int max_epochs = 100;
    int early_stop_patience = 10;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
    double ridge = 1e-6;
    bool center = false;
    // Plain SGD keeps linear-probe weights inside the span of the training
    // rows; Adam's per-coordinate scaling does not.
    OptimizerKind optimizer = OptimizerKind::sgd;
    int hidden_width = 256;

    void validate() const;
};

struct LinearMap {
    Matrix weights;  // t x d
    Vector bias;     // t

    Vector apply(const Vector& x) const { return weights * x + bias; }
};

/// Minimizes ||Y - A W^T - 1 b^T||^2 + ridge ||W||^2 through a thin SVD of the
/// (optionally centered) inputs. With ridge == 0 a rank-deficient A throws.
LinearMap fit_least_squares(const Matrix& inputs, const Matrix& targets, double ridge, bool fit_intercept = false);
LinearMap fit_least_squares(const ActivationSet& acts, const Matrix& targets, double ridge, bool fit_intercept = false);

/// Least-squares map from activations to 3-D positions, with intercept.
LinearMap train_position_regressor(const ActivationSet& acts, const Matrix& positions, double ridge = 1e-6);

struct TrainingLog {
    int epochs_run = 0;
    int best_epoch = 0;  // 1-based
    double best_val_loss = 0.0;
    std::vector<double> val_losses;
};

struct ProbeSummary {
    std::string model_id;
    std::int64_t layer = 0;
    std::string hook_point;
    std::int64_t d_model = 0;

    static ProbeSummary from(const CaptureMeta& m) { return {m.model_id, m.layer, m.hook_point, m.d_model}; }
};

struct LinearProbe {
    std::vector<std::string> classes;
    Matrix weights;  // C x d, row i is the direction for classes[i]
    Vector bias;
    ProbeSummary trained_on;
    ProbeObjective objective = ProbeObjective::logistic;
    ProbeMode mode = ProbeMode::one_vs_rest;
    TrainConfig config;
    Vector input_mean;  // empty unless trained with centering
    std::vector<TrainingLog> logs;

    Vector scores(const Vector& x) const;
    Matrix scores(const Matrix& rows) const;  // n x C
    std::size_t class_index(std::string_view cls) const;
};

struct MlpProbe {
    std::vector<std::string> classes;
    Matrix w1;  // hidden x d
    Vector b1;
    Matrix w2;  // C x hidden
    Vector b2;
    ProbeSummary trained_on;
    TrainConfig config;
    Vector input_mean;
    TrainingLog log;

    std::array<std::int64_t, 3> layer_dims() const { return {w1.cols(), w1.rows(), w2.rows()}; }
    Vector scores(const Vector& x) const;
    Matrix scores(const Matrix& rows) const;
};

/// Integer class labels for `acts` against `classes`; throws on a relation
/// that is not in `classes`.
std::vector<int> encode_labels(const ActivationSet& acts, const std::vector<std::string>& classes);

/// Relations present in `acts`, in catalog order.
std::vector<std::string> present_classes(const ActivationSet& acts);

LinearProbe train_logistic(const Matrix& x, std::span<const int> y, std::vector<std::string> classes,
                           const TrainConfig& cfg, ProbeMode mode = ProbeMode::one_vs_rest);
LinearProbe train_logistic(const ActivationSet& acts, const TrainConfig& cfg,
                           ProbeMode mode = ProbeMode::one_vs_rest, std::vector<std::string> classes = {});

/// One-hot targets fitted by least squares; scores are the fitted outputs.
LinearProbe train_least_squares_probe(const ActivationSet& acts, double ridge,
                                      std::vector<std::string> classes = {});

/// d -> hidden (ReLU) -> C, squared error against one-hot targets.
MlpProbe train_mlp(const Matrix& x, std::span<const int> y, std::vector<std::string> classes, const TrainConfig& cfg);
MlpProbe train_mlp(const ActivationSet& acts, const TrainConfig& cfg, std::vector<std::string> classes = {});

Vector probe_direction(const LinearProbe& probe, std::string_view cls, bool normalize = false);

/// Argmax accuracy; ties go to the lowest class index.
double evaluate(const LinearProbe& probe, const Matrix& x, std::span<const int> y);
double evaluate(const LinearProbe& probe, const ActivationSet& acts);
double evaluate(const MlpProbe& probe, const Matrix& x, std::span<const int> y);
double evaluate(const MlpProbe& probe, const ActivationSet& acts);

int argmax_lowest(const Vector& scores);

struct LossGrad {
    double loss = 0.0;
    Matrix grad_w;
    Vector grad_b;
};

/// Mean logistic loss and its analytic gradient. one_vs_rest sums the C
/// binary cross-entropies; multiclass is softmax cross-entropy.
LossGrad logistic_loss_grad(const Matrix& w, const Vector& b, const Matrix& x, std::span<const int> y,
                            ProbeMode mode);

}  // namespace spatialprobe
