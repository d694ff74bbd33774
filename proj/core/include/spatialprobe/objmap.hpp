#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "spatialprobe/actstore.hpp"
#include "spatialprobe/geometry.hpp"

namespace spatialprobe {

struct ClusterAssignment {
    int k = 0;
    Matrix centroids;  // k x k' (subspace coordinates)
    std::vector<int> assignment;
    double inertia = 0.0;
    std::uint64_t seed = 0;
    int iterations = 0;
    std::vector<double> inertia_history;  // after each Lloyd update
};

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or max_iters is hit. An empty cluster takes the point farthest
/// from its current centroid.
ClusterAssignment kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iters = 300);

double inertia_of(const Matrix& points, const Matrix& centroids, std::span<const int> assignment);

/// (1/n) * sum over clusters of the majority-class count.
double purity(std::span<const int> assignment, std::span<const std::string> labels);
double purity(std::span<const int> assignment, std::span<const int> labels);

/// Cosine between the projected mean of the rows labelled `group` and the
/// projected `direction`. Both are projected as directions (no centering).
double group_alignment(const ActivationSet& acts, const std::string& group, const Vector& direction,
                       const Subspace& subspace);

/// Cumulative variance ratio of the top k components; k = 0 gives 0.
double variance_explained_topk(const Subspace& s, Eigen::Index k);

struct ClusterReportRow {
    std::int64_t layer = 0;
    std::string object_slot;
    int k = 0;
    double purity = 0.0;
    double inertia = 0.0;
    std::uint64_t seed = 0;
};

void write_cluster_csv(std::ostream& out, const std::vector<ClusterReportRow>& rows, const std::string& provenance = {});

/// x,y,relation_label dump of 2-D projected points for external plotting.
void write_points_csv(std::ostream& out, const Matrix& points, std::span<const std::string> labels,
                      const std::string& provenance = {});

}  // namespace spatialprobe
