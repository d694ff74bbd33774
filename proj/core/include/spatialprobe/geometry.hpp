#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spatialprobe/common.hpp"

namespace spatialprobe {

enum class FitPopulation { directions, class_means, activations };

std::string_view to_string(FitPopulation p);
FitPopulation parse_fit_population(std::string_view s);

/// Principal subspace of a row set. Components are orthonormal rows sorted by
/// descending eigenvalue of the population covariance (1/m normalization).
struct Subspace {
    Vector mean;
    Matrix components;  // k x d
    Vector eigenvalues;
    Vector variance_explained;
    double total_variance = 0.0;
    FitPopulation fitted_on = FitPopulation::directions;

    Eigen::Index k() const { return components.rows(); }
    Eigen::Index dim() const { return components.cols(); }
};

/// Centers `rows`, eigendecomposes the covariance via SVD and keeps the top k.
/// Each component's largest-magnitude coordinate is made positive.
Subspace fit_pca(const Matrix& rows, Eigen::Index k, FitPopulation fitted_on = FitPopulation::directions);

/// Unit-normalizes every row before fitting.
Subspace fit_pca_normalized(const Matrix& rows, Eigen::Index k, FitPopulation fitted_on = FitPopulation::directions);

/// Affine coordinates of a point: z_j = <v - mean, component_j>.
Vector project(const Subspace& s, const Vector& v);
/// Coordinates of a direction: z_j = <v, component_j>, no centering.
Vector project_direction(const Subspace& s, const Vector& v);
/// project_direction applied row-wise.
Matrix project_directions(const Subspace& s, const Matrix& rows);
/// mean + sum_j z_j component_j
Vector reconstruct(const Subspace& s, const Vector& z);

double cosine(const Vector& u, const Vector& v);
double angle_deg(const Vector& u, const Vector& v);

enum class Space { original, pca };
std::string_view to_string(Space s);

struct PairAlignment {
    double cosine = 0.0;     // cos(w_a, -w_b)
    double angle_deg = 0.0;  // arccos(clamp(cosine)) in degrees
    double raw_cosine = 0.0; // cos(w_a, w_b)
    Space space = Space::original;
};

/// Antipodality of an inverse pair: a perfect inverse gives cosine 1, angle 0.
/// `space` only labels the result; project the inputs first for the PCA view.
PairAlignment inverse_alignment(const Vector& w_a, const Vector& w_b, Space space = Space::original);

struct CompositionMetric {
    double cosine = 0.0;
    double euclidean_distance = 0.0;
    double angle_deg = 0.0;
};

struct CompositionReport {
    CompositionMetric original;
    std::optional<CompositionMetric> pca;
};

/// Compares the sum mu_a + mu_b against mu_ab, in the original space and,
/// when a subspace is given, between their direction projections.
CompositionReport composition_metrics(const Vector& mu_a, const Vector& mu_b, const Vector& mu_ab,
                                      const Subspace* subspace = nullptr);

struct BoundaryLine {
    Vector normal;  // z1 - z2
    Vector point;   // (z1 + z2) / 2

    /// normal . (h - point); zero on the boundary, positive on z1's side.
    double side(const Vector& h) const { return normal.dot(h - point); }
};

BoundaryLine decision_boundary(const Vector& z1, const Vector& z2);

/// One row of a geometry report; euclid_dist is absent for inverse pairs.
struct GeometryRow {
    std::int64_t layer = 0;
    std::string pair_or_relation;
    Space space = Space::original;
    double cosine = 0.0;
    std::optional<double> euclid_dist;
    double angle_deg = 0.0;
};

/// CSV with columns layer,pair_or_relation,space,cosine,euclid_dist,angle_deg.
void write_geometry_csv(std::ostream& out, const std::vector<GeometryRow>& rows, const std::string& provenance = {});
/// JSON mirror at full precision.
void write_geometry_json(std::ostream& out, const std::vector<GeometryRow>& rows, const std::string& provenance = {});
std::vector<GeometryRow> read_geometry_json(std::istream& in);

}  // namespace spatialprobe
