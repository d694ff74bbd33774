#include "spatialprobe/objmap.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <ostream>
#include <random>

namespace spatialprobe {

using Index = Eigen::Index;

namespace {

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<int> nearest(const Matrix& points, const Matrix& centroids, std::vector<double>& dist) {
    std::vector<int> a(static_cast<std::size_t>(points.rows()));
    dist.assign(a.size(), 0.0);
    for (Index i = 0; i < points.rows(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index c = 0; c < centroids.rows(); ++c) {
            const double d = (points.row(i) - centroids.row(c)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        a[static_cast<std::size_t>(i)] = best;
        dist[static_cast<std::size_t>(i)] = best_d;
    }
    return a;
}

Matrix plus_plus_init(const Matrix& points, int k, std::mt19937_64& rng) {
    const Index n = points.rows();
    Matrix c(k, points.cols());
    c.row(0) = points.row(static_cast<Index>(rng() % static_cast<std::uint64_t>(n)));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = (points.row(i) - c.row(0)).squaredNorm();
    for (int j = 1; j < k; ++j) {
        double total = 0.0;
        for (double v : d2) total += v;
        Index pick = 0;
        if (total > 0.0) {
            double r = uniform01(rng) * total;
            pick = n - 1;
            for (Index i = 0; i < n; ++i) {
                r -= d2[static_cast<std::size_t>(i)];
                if (r < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
        }
        c.row(j) = points.row(pick);
        for (Index i = 0; i < n; ++i) {
            d2[static_cast<std::size_t>(i)] =
                std::min(d2[static_cast<std::size_t>(i)], (points.row(i) - c.row(j)).squaredNorm());
        }
    }
    return c;
}

void fill_empty_clusters(const Matrix& points, Matrix& centroids, std::vector<int>& assignment,
                         std::vector<double>& dist) {
    const auto k = static_cast<std::size_t>(centroids.rows());
    std::vector<Index> counts(k, 0);
    for (int a : assignment) ++counts[static_cast<std::size_t>(a)];
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0) continue;
        // Take the worst-fit point from a cluster that can spare one.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < assignment.size(); ++i) {
            if (counts[static_cast<std::size_t>(assignment[i])] <= 1) continue;
            if (dist[i] > far_d) {
                far_d = dist[i];
                far = i;
            }
        }
        --counts[static_cast<std::size_t>(assignment[far])];
        assignment[far] = static_cast<int>(c);
        counts[c] = 1;
        centroids.row(static_cast<Index>(c)) = points.row(static_cast<Index>(far));
        dist[far] = 0.0;
    }
}

}  // namespace

double inertia_of(const Matrix& points, const Matrix& centroids, std::span<const int> assignment) {
    double s = 0.0;
    for (Index i = 0; i < points.rows(); ++i) {
        s += (points.row(i) - centroids.row(assignment[static_cast<std::size_t>(i)])).squaredNorm();
    }
    return s;
}

ClusterAssignment kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iters) {
    const Index n = points.rows();
    if (k < 1) throw Error(ErrorCode::invalid_argument, "kmeans: k must be >= 1");
    if (n < k) throw Error(ErrorCode::invalid_argument, "kmeans: fewer points than clusters");
    if (max_iters < 1) throw Error(ErrorCode::invalid_argument, "kmeans: max_iters must be >= 1");
    if (!points.allFinite()) throw Error(ErrorCode::numeric, "kmeans: non-finite points");

    std::mt19937_64 rng(seed);
    ClusterAssignment out;
    out.k = k;
    out.seed = seed;
    out.centroids = plus_plus_init(points, k, rng);

    std::vector<double> dist;
    out.assignment = nearest(points, out.centroids, dist);
    fill_empty_clusters(points, out.centroids, out.assignment, dist);
    for (int it = 1; it <= max_iters; ++it) {
        out.iterations = it;
        Matrix sums = Matrix::Zero(k, points.cols());
        std::vector<Index> counts(static_cast<std::size_t>(k), 0);
        for (Index i = 0; i < n; ++i) {
            const auto c = out.assignment[static_cast<std::size_t>(i)];
            sums.row(c) += points.row(i);
            ++counts[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c) out.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        out.inertia_history.push_back(inertia_of(points, out.centroids, out.assignment));

        auto next = nearest(points, out.centroids, dist);
        fill_empty_clusters(points, out.centroids, next, dist);
        if (next == out.assignment) break;
        out.assignment = std::move(next);
    }
    out.inertia = inertia_of(points, out.centroids, out.assignment);
    return out;
}

namespace {

template <class Label>
double purity_impl(std::span<const int> assignment, std::span<const Label> labels) {
    if (assignment.size() != labels.size()) throw Error(ErrorCode::invalid_argument, "purity: length mismatch");
    if (assignment.empty()) throw Error(ErrorCode::invalid_argument, "purity: empty assignment");
    std::map<int, std::map<Label, std::size_t>> table;
    for (std::size_t i = 0; i < assignment.size(); ++i) ++table[assignment[i]][labels[i]];
    std::size_t hits = 0;
    for (const auto& [cluster, counts] : table) {
        std::size_t best = 0;
        for (const auto& [label, c] : counts) best = std::max(best, c);
        hits += best;
    }
    return static_cast<double>(hits) / static_cast<double>(assignment.size());
}

}  // namespace

double purity(std::span<const int> assignment, std::span<const std::string> labels) {
    return purity_impl<std::string>(assignment, labels);
}

double purity(std::span<const int> assignment, std::span<const int> labels) {
    return purity_impl<int>(assignment, labels);
}

double group_alignment(const ActivationSet& acts, const std::string& group, const Vector& direction,
                       const Subspace& subspace) {
    if (direction.norm() == 0.0) throw Error(ErrorCode::invalid_argument, "group_alignment: zero direction");
    Vector sum = Vector::Zero(static_cast<Index>(acts.dim()));
    std::size_t count = 0;
    for (std::size_t i = 0; i < acts.rows(); ++i) {
        if (acts.labels()[i].relation != group) continue;
        sum += acts.data().row(static_cast<Index>(i)).cast<double>().transpose();
        ++count;
    }
    if (count == 0) throw Error(ErrorCode::invalid_argument, "group_alignment: empty group " + group);
    const Vector mean = sum / static_cast<double>(count);
    return cosine(project_direction(subspace, mean), project_direction(subspace, direction));
}

double variance_explained_topk(const Subspace& s, Index k) {
    if (k < 0 || k > s.k()) throw Error(ErrorCode::invalid_argument, "variance_explained_topk: k out of range");
    return s.variance_explained.head(k).sum();
}

void write_cluster_csv(std::ostream& out, const std::vector<ClusterReportRow>& rows, const std::string& provenance) {
    if (!provenance.empty()) out << "# " << provenance << '\n';
    out << "layer,object_slot,k,purity,inertia,seed\n";
    for (const auto& r : rows) {
        out << r.layer << ',' << r.object_slot << ',' << r.k << ',' << r.purity << ',' << r.inertia << ',' << r.seed
            << '\n';
    }
}

void write_points_csv(std::ostream& out, const Matrix& points, std::span<const std::string> labels,
                      const std::string& provenance) {
    if (static_cast<std::size_t>(points.rows()) != labels.size()) {
        throw Error(ErrorCode::invalid_argument, "points/labels length mismatch");
    }
    if (points.cols() < 2) throw Error(ErrorCode::invalid_argument, "points need at least 2 coordinates");
    if (!provenance.empty()) out << "# " << provenance << '\n';
    out << "x,y,relation_label\n";
    for (Index i = 0; i < points.rows(); ++i) {
        out << points(i, 0) << ',' << points(i, 1) << ',' << labels[static_cast<std::size_t>(i)] << '\n';
    }
}

}  // namespace spatialprobe
