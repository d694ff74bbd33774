#include "spatialprobe/probekit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "spatialprobe/corpus.hpp"

namespace spatialprobe {

namespace {

using Index = Eigen::Index;

// Loss over the rows in `idx`; fills `grads` (same shapes as params) when non-null.
using BatchObjective =
    std::function<double(const std::vector<Matrix>& params, std::span<const int> idx, std::vector<Matrix>* grads)>;

void shuffle_in_place(std::vector<int>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng() % i]);
    }
}

struct TrainValSplit {
    std::vector<int> train;
    std::vector<int> val;
};

// Stratified by class; every class keeps at least one training row.
TrainValSplit stratified_split(std::span<const int> y, int n_classes, double val_fraction, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(n_classes));
    for (std::size_t i = 0; i < y.size(); ++i) by_class[static_cast<std::size_t>(y[i])].push_back(static_cast<int>(i));
    TrainValSplit s;
    for (auto& rows : by_class) {
        shuffle_in_place(rows, rng);
        auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(rows.size())));
        if (rows.size() <= 1) n_val = 0;
        n_val = std::min(n_val, rows.size() - 1);
        s.val.insert(s.val.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
        s.train.insert(s.train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    return s;
}

TrainingLog run_minibatch(std::vector<Matrix>& params, const TrainValSplit& split, const BatchObjective& objective,
                          const TrainConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<int> order = split.train;
    const std::span<const int> monitor = split.val.empty() ? std::span<const int>(split.train)
                                                           : std::span<const int>(split.val);

    std::vector<Matrix> grads(params.size());
    std::vector<Matrix> m1;
    std::vector<Matrix> m2;
    if (cfg.optimizer == OptimizerKind::adam) {
        for (const auto& p : params) {
            m1.push_back(Matrix::Zero(p.rows(), p.cols()));
            m2.push_back(Matrix::Zero(p.rows(), p.cols()));
        }
    }
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double adam_eps = 1e-8;
    long step = 0;

    TrainingLog log;
    log.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<Matrix> best = params;
    int since_best = 0;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_in_place(order, rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const auto len = std::min(batch, order.size() - start);
            const std::span<const int> idx(order.data() + start, len);
            const double loss = objective(params, idx, &grads);
            if (!std::isfinite(loss)) {
                throw Error(ErrorCode::numeric, "training diverged (non-finite loss) at epoch " + std::to_string(epoch));
            }
            ++step;
            for (std::size_t k = 0; k < params.size(); ++k) {
                if (cfg.optimizer == OptimizerKind::sgd) {
                    params[k] -= cfg.learning_rate * grads[k];
                } else {
                    m1[k] = beta1 * m1[k] + (1.0 - beta1) * grads[k];
                    m2[k] = beta2 * m2[k] + (1.0 - beta2) * grads[k].cwiseAbs2();
                    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
                    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
                    params[k].array() -= cfg.learning_rate * (m1[k].array() / c1) /
                                         ((m2[k].array() / c2).sqrt() + adam_eps);
                }
            }
        }
        const double val_loss = objective(params, monitor, nullptr);
        if (!std::isfinite(val_loss)) {
            throw Error(ErrorCode::numeric, "training diverged (non-finite loss) at epoch " + std::to_string(epoch));
        }
        log.val_losses.push_back(val_loss);
        log.epochs_run = epoch;
        if (val_loss < log.best_val_loss) {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best = params;
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    params = std::move(best);
    return log;
}

Matrix gather_rows(const Matrix& x, std::span<const int> idx) {
    Matrix out(static_cast<Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = x.row(idx[i]);
    return out;
}

// log(1 + exp(s)) without overflow.
double softplus(double s) {
    return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
}

double sigmoid(double s) {
    if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

// Binary logistic loss for rows `idx`; targets are 1 where y == cls.
double binary_objective(const Matrix& x, std::span<const int> y, int cls, const Matrix& w, const Matrix& b,
                        std::span<const int> idx, Matrix* gw, Matrix* gb) {
    const Matrix xb = gather_rows(x, idx);
    const Vector s = (xb * w.transpose()).col(0).array() + b(0, 0);
    const auto n = static_cast<double>(idx.size());
    double loss = 0.0;
    Vector resid(s.size());
    for (Index i = 0; i < s.size(); ++i) {
        const double t = y[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] == cls ? 1.0 : 0.0;
        loss += softplus(s(i)) - t * s(i);
        resid(i) = sigmoid(s(i)) - t;
    }
    if (gw != nullptr) {
        *gw = (resid.transpose() * xb) / n;
        *gb = Matrix::Constant(1, 1, resid.sum() / n);
    }
    return loss / n;
}

double softmax_objective(const Matrix& x, std::span<const int> y, const Matrix& w, const Matrix& b,
                         std::span<const int> idx, Matrix* gw, Matrix* gb) {
    const Matrix xb = gather_rows(x, idx);
    Matrix s = xb * w.transpose();
    s.rowwise() += b.col(0).transpose();
    const auto n = static_cast<double>(idx.size());
    double loss = 0.0;
    for (Index i = 0; i < s.rows(); ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i).array() -= mx;
        const double lse = std::log(s.row(i).array().exp().sum());
        const int yi = y[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        loss += lse - s(i, yi);
        s.row(i) = (s.row(i).array() - lse).exp();  // probabilities
        s(i, yi) -= 1.0;
    }
    if (gw != nullptr) {
        *gw = (s.transpose() * xb) / n;
        *gb = s.colwise().sum().transpose() / n;
    }
    return loss / n;
}

void check_inputs(const Matrix& x, std::span<const int> y, const std::vector<std::string>& classes) {
    if (x.rows() == 0) throw Error(ErrorCode::invalid_argument, "no training rows");
    if (static_cast<std::size_t>(x.rows()) != y.size()) {
        throw Error(ErrorCode::invalid_argument, "label count does not match row count");
    }
    if (classes.size() < 2) throw Error(ErrorCode::invalid_argument, "need at least 2 classes");
    std::vector<int> counts(classes.size(), 0);
    for (int v : y) {
        if (v < 0 || static_cast<std::size_t>(v) >= classes.size()) {
            throw Error(ErrorCode::invalid_argument, "label index out of range");
        }
        ++counts[static_cast<std::size_t>(v)];
    }
    for (std::size_t c = 0; c < classes.size(); ++c) {
        if (counts[c] == 0) throw Error(ErrorCode::invalid_argument, "missing class in training rows: " + classes[c]);
    }
    if (!x.allFinite()) throw Error(ErrorCode::numeric, "non-finite training inputs");
}

Matrix maybe_center(const Matrix& x, bool center, Vector& mean_out) {
    if (!center) {
        mean_out.resize(0);
        return x;
    }
    mean_out = x.colwise().mean().transpose();
    Matrix out = x;
    out.rowwise() -= mean_out.transpose();
    return out;
}

Matrix centered_input(const Matrix& rows, const Vector& mean) {
    if (mean.size() == 0) return rows;
    Matrix out = rows;
    out.rowwise() -= mean.transpose();
    return out;
}

}  // namespace

std::string_view to_string(ProbeObjective o) {
    return o == ProbeObjective::least_squares ? "least_squares" : "logistic";
}
std::string_view to_string(ProbeMode m) {
    return m == ProbeMode::multiclass ? "multiclass" : "one_vs_rest";
}
std::string_view to_string(OptimizerKind o) {
    return o == OptimizerKind::sgd ? "sgd" : "adam";
}
ProbeObjective parse_probe_objective(std::string_view s) {
    if (s == "least_squares") return ProbeObjective::least_squares;
    if (s == "logistic") return ProbeObjective::logistic;
    throw Error(ErrorCode::invalid_argument, "unknown probe objective: " + std::string(s));
}
ProbeMode parse_probe_mode(std::string_view s) {
    if (s == "multiclass") return ProbeMode::multiclass;
    if (s == "one_vs_rest" || s == "ovr") return ProbeMode::one_vs_rest;
    throw Error(ErrorCode::invalid_argument, "unknown probe mode: " + std::string(s));
}
OptimizerKind parse_optimizer(std::string_view s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw Error(ErrorCode::invalid_argument, "unknown optimizer: " + std::string(s));
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::invalid_argument, "learning_rate must be > 0");
    if (batch_size < 1) throw Error(ErrorCode::invalid_argument, "batch_size must be >= 1");
    if (max_epochs < 1) throw Error(ErrorCode::invalid_argument, "max_epochs must be >= 1");
    if (early_stop_patience < 1) throw Error(ErrorCode::invalid_argument, "early_stop_patience must be >= 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
        throw Error(ErrorCode::invalid_argument, "val_fraction must lie in [0,1)");
    }
    if (!(ridge >= 0.0)) throw Error(ErrorCode::invalid_argument, "ridge must be >= 0");
    if (hidden_width < 1) throw Error(ErrorCode::invalid_argument, "hidden_width must be >= 1");
}

LinearMap fit_least_squares(const Matrix& inputs, const Matrix& targets, double ridge, bool fit_intercept) {
    if (inputs.rows() < 1) throw Error(ErrorCode::invalid_argument, "least squares needs at least one row");
    if (targets.rows() != inputs.rows()) throw Error(ErrorCode::invalid_argument, "target rows != input rows");
    if (!(ridge >= 0.0)) throw Error(ErrorCode::invalid_argument, "ridge must be >= 0");
    if (!targets.allFinite() || !inputs.allFinite()) {
        throw Error(ErrorCode::numeric, "least squares inputs must be finite");
    }
    Matrix a = inputs;
    Matrix y = targets;
    Vector x_mean = Vector::Zero(inputs.cols());
    Vector y_mean = Vector::Zero(targets.cols());
    if (fit_intercept) {
        x_mean = a.colwise().mean().transpose();
        y_mean = y.colwise().mean().transpose();
        a.rowwise() -= x_mean.transpose();
        y.rowwise() -= y_mean.transpose();
    }

    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double s_max = s.size() > 0 ? s(0) : 0.0;
    const double tol = static_cast<double>(std::max(a.rows(), a.cols())) * std::numeric_limits<double>::epsilon() * s_max;

    if (ridge == 0.0) {
        const Index rank = (s.array() > tol).count();
        if (rank < a.cols()) {
            throw Error(ErrorCode::numeric, "least squares system is rank deficient (rank " + std::to_string(rank) +
                                                " < " + std::to_string(a.cols()) + "); use ridge > 0");
        }
    }
    Vector shrink(s.size());
    for (Index i = 0; i < s.size(); ++i) {
        shrink(i) = ridge == 0.0 ? 1.0 / s(i) : s(i) / (s(i) * s(i) + ridge);
    }
    const Matrix coef = svd.matrixV() * (shrink.asDiagonal() * (svd.matrixU().transpose() * y));  // d x t

    LinearMap out;
    out.weights = coef.transpose();
    out.bias = fit_intercept ? Vector(y_mean - out.weights * x_mean) : Vector(Vector::Zero(targets.cols()));
    return out;
}

LinearMap fit_least_squares(const ActivationSet& acts, const Matrix& targets, double ridge, bool fit_intercept) {
    return fit_least_squares(acts.to_double(), targets, ridge, fit_intercept);
}

LinearMap train_position_regressor(const ActivationSet& acts, const Matrix& positions, double ridge) {
    if (positions.cols() != 3) throw Error(ErrorCode::invalid_argument, "positions must be n x 3");
    return fit_least_squares(acts, positions, ridge, true);
}

Vector LinearProbe::scores(const Vector& x) const {
    if (x.size() != weights.cols()) throw Error(ErrorCode::invalid_argument, "probe input dimension mismatch");
    if (input_mean.size() == 0) return weights * x + bias;
    return weights * (x - input_mean) + bias;
}

Matrix LinearProbe::scores(const Matrix& rows) const {
    if (rows.cols() != weights.cols()) throw Error(ErrorCode::invalid_argument, "probe input dimension mismatch");
    Matrix s = centered_input(rows, input_mean) * weights.transpose();
    s.rowwise() += bias.transpose();
    return s;
}

std::size_t LinearProbe::class_index(std::string_view cls) const {
    const auto it = std::find(classes.begin(), classes.end(), cls);
    if (it == classes.end()) throw Error(ErrorCode::not_found, "class not in probe: " + std::string(cls));
    return static_cast<std::size_t>(it - classes.begin());
}

Vector MlpProbe::scores(const Vector& x) const {
    Matrix row = x.transpose();
    return scores(row).row(0).transpose();
}

Matrix MlpProbe::scores(const Matrix& rows) const {
    if (rows.cols() != w1.cols()) throw Error(ErrorCode::invalid_argument, "probe input dimension mismatch");
    Matrix h = centered_input(rows, input_mean) * w1.transpose();
    h.rowwise() += b1.transpose();
    h = h.cwiseMax(0.0);
    Matrix o = h * w2.transpose();
    o.rowwise() += b2.transpose();
    return o;
}

std::vector<std::string> present_classes(const ActivationSet& acts) {
    std::vector<std::string> out;
    for (const auto& r : relation_catalog(Dimensionality::three_d)) {
        const bool present = std::any_of(acts.labels().begin(), acts.labels().end(),
                                         [&](const RowLabel& l) { return l.relation == r.id; });
        if (present) out.push_back(r.id);
    }
    return out;
}

std::vector<int> encode_labels(const ActivationSet& acts, const std::vector<std::string>& classes) {
    std::vector<int> y;
    y.reserve(acts.rows());
    for (const auto& l : acts.labels()) {
        const auto it = std::find(classes.begin(), classes.end(), l.relation);
        if (it == classes.end()) {
            throw Error(ErrorCode::invalid_argument, "class mismatch: relation '" + l.relation + "' not in probe classes");
        }
        y.push_back(static_cast<int>(it - classes.begin()));
    }
    return y;
}

LossGrad logistic_loss_grad(const Matrix& w, const Vector& b, const Matrix& x, std::span<const int> y,
                            ProbeMode mode) {
    std::vector<int> all(static_cast<std::size_t>(x.rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    LossGrad out;
    if (mode == ProbeMode::multiclass) {
        Matrix gw;
        Matrix gb;
        out.loss = softmax_objective(x, y, w, Matrix(b), all, &gw, &gb);
        out.grad_w = gw;
        out.grad_b = gb.col(0);
        return out;
    }
    out.grad_w = Matrix::Zero(w.rows(), w.cols());
    out.grad_b = Vector::Zero(w.rows());
    for (Index c = 0; c < w.rows(); ++c) {
        Matrix gw;
        Matrix gb;
        out.loss += binary_objective(x, y, static_cast<int>(c), w.row(c), Matrix::Constant(1, 1, b(c)), all, &gw, &gb);
        out.grad_w.row(c) = gw;
        out.grad_b(c) = gb(0, 0);
    }
    return out;
}

LinearProbe train_logistic(const Matrix& x_raw, std::span<const int> y, std::vector<std::string> classes,
                           const TrainConfig& cfg, ProbeMode mode) {
    cfg.validate();
    check_inputs(x_raw, y, classes);
    LinearProbe probe;
    const Matrix x = maybe_center(x_raw, cfg.center, probe.input_mean);
    const auto n_classes = static_cast<int>(classes.size());
    const auto split = stratified_split(y, n_classes, cfg.val_fraction, derive_seed(cfg.seed, "val_split"));

    probe.classes = std::move(classes);
    probe.objective = ProbeObjective::logistic;
    probe.mode = mode;
    probe.config = cfg;
    probe.weights = Matrix::Zero(n_classes, x.cols());
    probe.bias = Vector::Zero(n_classes);

    if (mode == ProbeMode::multiclass) {
        std::vector<Matrix> params = {probe.weights, Matrix(probe.bias)};
        BatchObjective obj = [&](const std::vector<Matrix>& p, std::span<const int> idx, std::vector<Matrix>* g) {
            return softmax_objective(x, y, p[0], p[1], idx, g ? &(*g)[0] : nullptr, g ? &(*g)[1] : nullptr);
        };
        probe.logs.push_back(run_minibatch(params, split, obj, cfg, derive_seed(cfg.seed, "multiclass")));
        probe.weights = params[0];
        probe.bias = params[1].col(0);
        return probe;
    }

    for (int c = 0; c < n_classes; ++c) {
        std::vector<Matrix> params = {Matrix::Zero(1, x.cols()), Matrix::Zero(1, 1)};
        BatchObjective obj = [&](const std::vector<Matrix>& p, std::span<const int> idx, std::vector<Matrix>* g) {
            return binary_objective(x, y, c, p[0], p[1], idx, g ? &(*g)[0] : nullptr, g ? &(*g)[1] : nullptr);
        };
        probe.logs.push_back(
            run_minibatch(params, split, obj, cfg, derive_seed(cfg.seed, "ovr:" + probe.classes[static_cast<std::size_t>(c)])));
        probe.weights.row(c) = params[0].row(0);
        probe.bias(c) = params[1](0, 0);
    }
    return probe;
}

LinearProbe train_logistic(const ActivationSet& acts, const TrainConfig& cfg, ProbeMode mode,
                           std::vector<std::string> classes) {
    if (classes.empty()) classes = present_classes(acts);
    const auto y = encode_labels(acts, classes);
    auto probe = train_logistic(acts.to_double(), y, std::move(classes), cfg, mode);
    probe.trained_on = ProbeSummary::from(acts.meta());
    return probe;
}

LinearProbe train_least_squares_probe(const ActivationSet& acts, double ridge, std::vector<std::string> classes) {
    if (classes.empty()) classes = present_classes(acts);
    if (classes.size() < 2) throw Error(ErrorCode::invalid_argument, "need at least 2 classes");
    const auto y = encode_labels(acts, classes);
    Matrix targets = Matrix::Zero(static_cast<Index>(acts.rows()), static_cast<Index>(classes.size()));
    for (std::size_t i = 0; i < y.size(); ++i) targets(static_cast<Index>(i), y[i]) = 1.0;
    const auto map = fit_least_squares(acts, targets, ridge, true);

    LinearProbe probe;
    probe.classes = std::move(classes);
    probe.weights = map.weights;
    probe.bias = map.bias;
    probe.objective = ProbeObjective::least_squares;
    probe.mode = ProbeMode::multiclass;
    probe.config.ridge = ridge;
    probe.trained_on = ProbeSummary::from(acts.meta());
    return probe;
}

MlpProbe train_mlp(const Matrix& x_raw, std::span<const int> y, std::vector<std::string> classes,
                   const TrainConfig& cfg) {
    cfg.validate();
    check_inputs(x_raw, y, classes);
    MlpProbe probe;
    const Matrix x = maybe_center(x_raw, cfg.center, probe.input_mean);
    const auto n_classes = static_cast<Index>(classes.size());
    const Index hidden = cfg.hidden_width;
    const Index d = x.cols();

    std::mt19937_64 rng(derive_seed(cfg.seed, "mlp_init"));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Matrix> params = {
        Matrix::NullaryExpr(hidden, d, [&]() { return normal(rng) * std::sqrt(2.0 / static_cast<double>(d)); }),
        Matrix::Zero(hidden, 1),
        Matrix::NullaryExpr(n_classes, hidden, [&]() { return normal(rng) * std::sqrt(1.0 / static_cast<double>(hidden)); }),
        Matrix::Zero(n_classes, 1),
    };

    BatchObjective obj = [&](const std::vector<Matrix>& p, std::span<const int> idx, std::vector<Matrix>* g) {
        const Matrix xb = gather_rows(x, idx);
        Matrix pre = xb * p[0].transpose();
        pre.rowwise() += p[1].col(0).transpose();
        const Matrix h = pre.cwiseMax(0.0);
        Matrix out = h * p[2].transpose();
        out.rowwise() += p[3].col(0).transpose();
        for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i), y[static_cast<std::size_t>(idx[i])]) -= 1.0;
        const auto n = static_cast<double>(idx.size());
        const double loss = out.squaredNorm() / n;
        if (g != nullptr) {
            const Matrix d_out = (2.0 / n) * out;
            (*g)[2] = d_out.transpose() * h;
            (*g)[3] = d_out.colwise().sum().transpose();
            const Matrix d_h = ((d_out * p[2]).array() * (pre.array() > 0.0).cast<double>()).matrix();
            (*g)[0] = d_h.transpose() * xb;
            (*g)[1] = d_h.colwise().sum().transpose();
        }
        return loss;
    };
    const auto split = stratified_split(y, static_cast<int>(n_classes), cfg.val_fraction, derive_seed(cfg.seed, "val_split"));
    probe.log = run_minibatch(params, split, obj, cfg, derive_seed(cfg.seed, "mlp"));
    probe.classes = std::move(classes);
    probe.w1 = params[0];
    probe.b1 = params[1].col(0);
    probe.w2 = params[2];
    probe.b2 = params[3].col(0);
    probe.config = cfg;
    return probe;
}

MlpProbe train_mlp(const ActivationSet& acts, const TrainConfig& cfg, std::vector<std::string> classes) {
    if (classes.empty()) classes = present_classes(acts);
    const auto y = encode_labels(acts, classes);
    auto probe = train_mlp(acts.to_double(), y, std::move(classes), cfg);
    probe.trained_on = ProbeSummary::from(acts.meta());
    return probe;
}

Vector probe_direction(const LinearProbe& probe, std::string_view cls, bool normalize) {
    Vector w = probe.weights.row(static_cast<Index>(probe.class_index(cls))).transpose();
    if (normalize) {
        const double n = w.norm();
        if (n == 0.0) throw Error(ErrorCode::numeric, "probe direction is zero: " + std::string(cls));
        w /= n;
    }
    return w;
}

int argmax_lowest(const Vector& scores) {
    int best = 0;
    for (Index i = 1; i < scores.size(); ++i) {
        if (scores(i) > scores(best)) best = static_cast<int>(i);
    }
    return best;
}

namespace {

double accuracy_of(const Matrix& scores, std::span<const int> y) {
    if (scores.rows() == 0) throw Error(ErrorCode::invalid_argument, "accuracy is undefined on an empty set");
    std::size_t hits = 0;
    for (Index i = 0; i < scores.rows(); ++i) {
        if (argmax_lowest(scores.row(i).transpose()) == y[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

void check_eval_labels(std::span<const int> y, std::size_t n_rows, std::size_t n_classes) {
    if (y.size() != n_rows) throw Error(ErrorCode::invalid_argument, "label count does not match row count");
    for (int v : y) {
        if (v < 0 || static_cast<std::size_t>(v) >= n_classes) throw Error(ErrorCode::invalid_argument, "class mismatch");
    }
}

}  // namespace

double evaluate(const LinearProbe& probe, const Matrix& x, std::span<const int> y) {
    if (x.rows() == 0) throw Error(ErrorCode::invalid_argument, "accuracy is undefined on an empty set");
    check_eval_labels(y, static_cast<std::size_t>(x.rows()), probe.classes.size());
    return accuracy_of(probe.scores(x), y);
}

double evaluate(const LinearProbe& probe, const ActivationSet& acts) {
    if (acts.rows() == 0) throw Error(ErrorCode::invalid_argument, "accuracy is undefined on an empty set");
    const auto y = encode_labels(acts, probe.classes);
    return evaluate(probe, acts.to_double(), y);
}

double evaluate(const MlpProbe& probe, const Matrix& x, std::span<const int> y) {
    if (x.rows() == 0) throw Error(ErrorCode::invalid_argument, "accuracy is undefined on an empty set");
    check_eval_labels(y, static_cast<std::size_t>(x.rows()), probe.classes.size());
    return accuracy_of(probe.scores(x), y);
}

double evaluate(const MlpProbe& probe, const ActivationSet& acts) {
    if (acts.rows() == 0) throw Error(ErrorCode::invalid_argument, "accuracy is undefined on an empty set");
    const auto y = encode_labels(acts, probe.classes);
    return evaluate(probe, acts.to_double(), y);
}

}  // namespace spatialprobe
