#include "spatialprobe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>

#include <json.hpp>

namespace spatialprobe {

using Index = Eigen::Index;

std::string_view to_string(FitPopulation p) {
    switch (p) {
        case FitPopulation::directions: return "directions";
        case FitPopulation::class_means: return "class_means";
        case FitPopulation::activations: return "activations";
    }
    return "directions";
}

FitPopulation parse_fit_population(std::string_view s) {
    if (s == "directions") return FitPopulation::directions;
    if (s == "class_means") return FitPopulation::class_means;
    if (s == "activations") return FitPopulation::activations;
    throw Error(ErrorCode::invalid_argument, "unknown PCA population: " + std::string(s));
}

std::string_view to_string(Space s) {
    return s == Space::original ? "original" : "pca";
}

Subspace fit_pca(const Matrix& rows, Index k, FitPopulation fitted_on) {
    const Index m = rows.rows();
    const Index d = rows.cols();
    if (m < 2) throw Error(ErrorCode::invalid_argument, "PCA needs at least 2 rows");
    if (k < 0 || k > std::min(m, d)) {
        throw Error(ErrorCode::invalid_argument, "PCA k=" + std::to_string(k) + " exceeds min(m, d)=" +
                                                     std::to_string(std::min(m, d)));
    }
    if (!rows.allFinite()) throw Error(ErrorCode::numeric, "PCA input contains non-finite values");

    Subspace s;
    s.fitted_on = fitted_on;
    s.mean = rows.colwise().mean().transpose();
    Matrix centered = rows;
    centered.rowwise() -= s.mean.transpose();
    const double scale = centered.cwiseAbs().maxCoeff();
    if (scale == 0.0) throw Error(ErrorCode::numeric, "PCA input rows are all equal");

    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    const Vector sv = svd.singularValues();
    const Vector eig = sv.cwiseAbs2() / static_cast<double>(m);
    s.total_variance = eig.sum();

    s.components = svd.matrixV().leftCols(k).transpose();
    for (Index j = 0; j < k; ++j) {
        Index arg = 0;
        s.components.row(j).cwiseAbs().maxCoeff(&arg);
        if (s.components(j, arg) < 0.0) s.components.row(j) *= -1.0;
    }
    s.eigenvalues = eig.head(k);
    s.variance_explained = s.eigenvalues / s.total_variance;
    return s;
}

Subspace fit_pca_normalized(const Matrix& rows, Index k, FitPopulation fitted_on) {
    Matrix unit = rows;
    for (Index i = 0; i < unit.rows(); ++i) {
        const double n = unit.row(i).norm();
        if (n == 0.0) throw Error(ErrorCode::numeric, "cannot normalize a zero row before PCA");
        unit.row(i) /= n;
    }
    return fit_pca(unit, k, fitted_on);
}

namespace {

void check_dim(const Subspace& s, Index n, const char* what) {
    if (n != s.dim()) {
        throw Error(ErrorCode::invalid_argument, std::string(what) + ": dimension " + std::to_string(n) +
                                                     " does not match subspace dimension " + std::to_string(s.dim()));
    }
}

double clamp_unit(double c) {
    return std::clamp(c, -1.0, 1.0);
}

double to_degrees(double rad) {
    return rad * 180.0 / std::numbers::pi;
}

}  // namespace

Vector project(const Subspace& s, const Vector& v) {
    check_dim(s, v.size(), "project");
    return s.components * (v - s.mean);
}

Vector project_direction(const Subspace& s, const Vector& v) {
    check_dim(s, v.size(), "project_direction");
    return s.components * v;
}

Matrix project_directions(const Subspace& s, const Matrix& rows) {
    check_dim(s, rows.cols(), "project_directions");
    return rows * s.components.transpose();
}

Vector reconstruct(const Subspace& s, const Vector& z) {
    if (z.size() != s.k()) throw Error(ErrorCode::invalid_argument, "reconstruct: coordinate count does not match k");
    return s.mean + s.components.transpose() * z;
}

double cosine(const Vector& u, const Vector& v) {
    if (u.size() != v.size()) throw Error(ErrorCode::invalid_argument, "cosine: dimension mismatch");
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::invalid_argument, "cosine of a zero vector is undefined");
    return clamp_unit(u.dot(v) / (nu * nv));
}

double angle_deg(const Vector& u, const Vector& v) {
    return to_degrees(std::acos(cosine(u, v)));
}

PairAlignment inverse_alignment(const Vector& w_a, const Vector& w_b, Space space) {
    PairAlignment p;
    p.space = space;
    p.raw_cosine = cosine(w_a, w_b);
    p.cosine = cosine(w_a, Vector(-w_b));
    p.angle_deg = to_degrees(std::acos(p.cosine));
    return p;
}

namespace {

CompositionMetric metric_between(const Vector& predicted, const Vector& actual) {
    CompositionMetric m;
    m.cosine = cosine(predicted, actual);
    m.angle_deg = to_degrees(std::acos(m.cosine));
    m.euclidean_distance = (predicted - actual).norm();
    return m;
}

}  // namespace

CompositionReport composition_metrics(const Vector& mu_a, const Vector& mu_b, const Vector& mu_ab,
                                      const Subspace* subspace) {
    if (mu_a.size() != mu_b.size() || mu_a.size() != mu_ab.size()) {
        throw Error(ErrorCode::invalid_argument, "composition_metrics: dimension mismatch");
    }
    if (mu_a.norm() == 0.0 || mu_b.norm() == 0.0 || mu_ab.norm() == 0.0) {
        throw Error(ErrorCode::invalid_argument, "composition_metrics: zero input vector");
    }
    const Vector sum = mu_a + mu_b;
    if (sum.norm() == 0.0) throw Error(ErrorCode::invalid_argument, "composition_metrics: composed sum is zero");

    CompositionReport r;
    r.original = metric_between(sum, mu_ab);
    if (subspace != nullptr) {
        const Vector z_sum = project_direction(*subspace, sum);
        const Vector z_ab = project_direction(*subspace, mu_ab);
        if (z_sum.norm() == 0.0 || z_ab.norm() == 0.0) {
            throw Error(ErrorCode::numeric, "composition_metrics: projection onto subspace is zero");
        }
        r.pca = metric_between(z_sum, z_ab);
    }
    return r;
}

BoundaryLine decision_boundary(const Vector& z1, const Vector& z2) {
    if (z1.size() != z2.size()) throw Error(ErrorCode::invalid_argument, "decision_boundary: dimension mismatch");
    BoundaryLine b;
    b.normal = z1 - z2;
    if (b.normal.norm() == 0.0) throw Error(ErrorCode::invalid_argument, "decision_boundary: identical inputs");
    b.point = 0.5 * (z1 + z2);
    return b;
}

void write_geometry_csv(std::ostream& out, const std::vector<GeometryRow>& rows, const std::string& provenance) {
    if (!provenance.empty()) out << "# " << provenance << '\n';
    out << "layer,pair_or_relation,space,cosine,euclid_dist,angle_deg\n";
    out << std::fixed;
    for (const auto& r : rows) {
        out << r.layer << ',' << r.pair_or_relation << ',' << to_string(r.space) << ',' << std::setprecision(4)
            << r.cosine << ',';
        if (r.euclid_dist) out << std::setprecision(2) << *r.euclid_dist;
        out << ',' << std::setprecision(2) << r.angle_deg << '\n';
    }
    out.unsetf(std::ios::floatfield);
}

void write_geometry_json(std::ostream& out, const std::vector<GeometryRow>& rows, const std::string& provenance) {
    nlohmann::ordered_json doc;
    doc["provenance"] = provenance;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json j;
        j["layer"] = r.layer;
        j["pair_or_relation"] = r.pair_or_relation;
        j["space"] = to_string(r.space);
        j["cosine"] = r.cosine;
        j["euclid_dist"] = r.euclid_dist ? nlohmann::ordered_json(*r.euclid_dist) : nlohmann::ordered_json(nullptr);
        j["angle_deg"] = r.angle_deg;
        arr.push_back(std::move(j));
    }
    doc["rows"] = std::move(arr);
    out << doc.dump(2) << '\n';
}

std::vector<GeometryRow> read_geometry_json(std::istream& in) {
    try {
        const auto doc = nlohmann::json::parse(in);
        std::vector<GeometryRow> rows;
        for (const auto& j : doc.at("rows")) {
            GeometryRow r;
            r.layer = j.at("layer").get<std::int64_t>();
            r.pair_or_relation = j.at("pair_or_relation").get<std::string>();
            const auto space = j.at("space").get<std::string>();
            if (space != "original" && space != "pca") throw Error(ErrorCode::format, "unknown space: " + space);
            r.space = space == "pca" ? Space::pca : Space::original;
            r.cosine = j.at("cosine").get<double>();
            if (!j.at("euclid_dist").is_null()) r.euclid_dist = j.at("euclid_dist").get<double>();
            r.angle_deg = j.at("angle_deg").get<double>();
            rows.push_back(std::move(r));
        }
        return rows;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format, std::string("bad geometry report: ") + e.what());
    }
}

}  // namespace spatialprobe
