#include "spatialprobe/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace spatialprobe {

using Index = Eigen::Index;

void SynthConfig::validate() const {
    if (n_distractors < 0) throw Error(ErrorCode::invalid_argument, "n_distractors must be >= 0");
    if (d_model < 3 + n_distractors + (compositional ? 0 : 1)) {
        throw Error(ErrorCode::invalid_argument, "d_model too small for the planted basis and distractors");
    }
    if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::invalid_argument, "noise_sigma must be >= 0");
    if (!std::isfinite(distractor_scale) || !std::isfinite(signal_scale) || signal_scale <= 0.0) {
        throw Error(ErrorCode::invalid_argument, "scales must be finite and signal_scale > 0");
    }
}

std::string_view to_string(ObjectSlot s) {
    switch (s) {
        case ObjectSlot::sentence: return "sentence";
        case ObjectSlot::object1: return "obj1";
        case ObjectSlot::object2: return "obj2";
    }
    return "sentence";
}

ObjectSlot parse_object_slot(std::string_view s) {
    if (s == "sentence") return ObjectSlot::sentence;
    if (s == "obj1" || s == "object1") return ObjectSlot::object1;
    if (s == "obj2" || s == "object2") return ObjectSlot::object2;
    throw Error(ErrorCode::invalid_argument, "unknown object slot: " + std::string(s));
}

namespace {

Matrix random_orthonormal_rows(Index rows, Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Matrix g = Matrix::NullaryExpr(d, d, [&]() { return normal(rng); });
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign fix makes Q Haar distributed.
    for (Index j = 0; j < d; ++j) {
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    return q.leftCols(rows).transpose();
}

Vector offset_vector(const GridOffset& o) {
    return Vector{{static_cast<double>(o[0]), static_cast<double>(o[1]), static_cast<double>(o[2])}};
}

}  // namespace

SynthWorld::SynthWorld(const SynthConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const Index extra = cfg_.compositional ? 0 : 1;
    const Matrix frame = random_orthonormal_rows(3 + cfg_.n_distractors + extra, cfg_.d_model, derive_seed(cfg_.seed, "basis"));
    basis_ = frame.topRows(3);
    distractors_ = frame.middleRows(3, cfg_.n_distractors);
    if (!cfg_.compositional) composition_axis_ = frame.row(3 + cfg_.n_distractors).transpose();
}

Vector SynthWorld::planted_direction(const GridOffset& offset) const {
    return cfg_.signal_scale * (basis_.transpose() * offset_vector(offset));
}

Vector SynthWorld::activation(const PromptRecord& record, ObjectSlot slot) const {
    const auto& rel = relation_or_throw(record.relation);
    GridOffset rel_pos{};
    for (int i = 0; i < 3; ++i) rel_pos[i] = static_cast<int>(std::lround(record.p1[i] - record.p2[i]));
    if (slot == ObjectSlot::object2) {
        for (auto& c : rel_pos) c = -c;
    }
    Vector x = planted_direction(rel_pos);

    if (!cfg_.compositional && rel.kind == RelationKind::composed) {
        // Fixed per-relation kick along the reserved axis.
        std::mt19937_64 rng(derive_seed(cfg_.seed, "noncomp:" + rel.id));
        std::normal_distribution<double> normal(0.0, 1.0);
        const double sign = slot == ObjectSlot::object2 ? -1.0 : 1.0;
        x += sign * 0.5 * cfg_.signal_scale * normal(rng) * composition_axis_;
    }

    if (cfg_.n_distractors > 0) {
        std::mt19937_64 rng(derive_seed(cfg_.seed, "pair:" + record.obj1 + "|" + record.obj2));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Index k = 0; k < distractors_.rows(); ++k) {
            x += cfg_.distractor_scale * normal(rng) * distractors_.row(k).transpose();
        }
    }

    if (cfg_.noise_sigma > 0.0) {
        const auto seed = derive_seed(cfg_.seed ^ splitmix64(static_cast<std::uint64_t>(record.id)),
                                      std::string("noise:") + std::string(to_string(slot)));
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, cfg_.noise_sigma);
        for (Index i = 0; i < x.size(); ++i) x(i) += normal(rng);
    }
    return x;
}

Matrix plant_basis(const SynthConfig& cfg) {
    return SynthWorld(cfg).basis();
}

Vector synth_activation(const PromptRecord& record, const SynthWorld& world, ObjectSlot slot) {
    return world.activation(record, slot);
}

ActivationSet synth_dataset(std::span<const PromptRecord> corpus, const SynthWorld& world, ObjectSlot slot,
                            std::int64_t layer) {
    const auto d = world.config().d_model;
    FloatMatrix data(static_cast<Index>(corpus.size()), d);
    std::vector<RowLabel> labels;
    labels.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& r = corpus[i];
        data.row(static_cast<Index>(i)) = world.activation(r, slot).cast<float>().transpose();
        labels.push_back({r.id, r.relation, r.obj1, r.obj2, r.split});
    }
    CaptureMeta meta;
    meta.model_id = "synthworld";
    meta.layer = layer;
    meta.token_strategy =
        slot == ObjectSlot::sentence ? TokenStrategy::final_token_before_period : TokenStrategy::entity_span_mean;
    meta.d_model = d;
    meta.mean_row_norm = mean_row_norm(data);
    meta.capture_seed = world.config().seed;
    return ActivationSet(std::move(data), std::move(meta), std::move(labels));
}

namespace {

Matrix orthonormal_rows(const Matrix& rows) {
    // Thin Q of rows^T spans the same row space.
    Eigen::HouseholderQR<Matrix> qr(rows.transpose());
    return Matrix(qr.householderQ() * Matrix::Identity(rows.cols(), rows.rows())).transpose();
}

}  // namespace

std::vector<double> principal_angles_deg(const Matrix& a_rows, const Matrix& b_rows) {
    if (a_rows.cols() != b_rows.cols()) throw Error(ErrorCode::invalid_argument, "principal angles: dimension mismatch");
    if (a_rows.rows() == 0 || b_rows.rows() == 0) throw Error(ErrorCode::invalid_argument, "principal angles: empty span");
    const Matrix qa = orthonormal_rows(a_rows);
    const Matrix qb = orthonormal_rows(b_rows);
    Eigen::JacobiSVD<Matrix> svd(qa * qb.transpose());
    const Vector s = svd.singularValues();
    std::vector<double> angles;
    for (Index i = 0; i < s.size(); ++i) {
        angles.push_back(std::acos(std::clamp(s(i), -1.0, 1.0)) * 180.0 / std::numbers::pi);
    }
    std::sort(angles.begin(), angles.end());
    return angles;
}

double subspace_recovery_error(const Subspace& recovered, const Matrix& basis) {
    const auto angles = principal_angles_deg(recovered.components, basis);
    return angles.back();
}

}  // namespace spatialprobe
