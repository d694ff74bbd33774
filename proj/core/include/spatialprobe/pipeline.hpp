#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spatialprobe/actstore.hpp"
#include "spatialprobe/corpus.hpp"
#include "spatialprobe/geometry.hpp"
#include "spatialprobe/objmap.hpp"
#include "spatialprobe/probekit.hpp"
#include "spatialprobe/steerlab.hpp"
#include "spatialprobe/synthworld.hpp"

namespace spatialprobe {

/// Inverse pairs whose members both appear in `classes`, in catalog order.
std::vector<std::pair<std::string, std::string>> inverse_pairs(std::span<const std::string> classes);

/// Probe rows for `classes`, stacked in the given order.
Matrix direction_rows(const LinearProbe& probe, std::span<const std::string> classes, bool normalize = true);

/// PCA over the probe directions of the probe's atomic classes.
Subspace direction_subspace(const LinearProbe& probe, Eigen::Index k, bool normalize = true);

/// One row per inverse pair in original space, plus PCA rows when a subspace is given.
/// Labels look like "above<->below".
std::vector<GeometryRow> inverse_report(const LinearProbe& probe, const Subspace* subspace, std::int64_t layer,
                                        bool normalize = true);

/// One row per composed relation found in `means` (with both parts present) and
/// a trailing "mean" row per space averaging the others.
std::vector<GeometryRow> composition_report(const std::map<std::string, Vector>& means, const Subspace* subspace,
                                            std::int64_t layer);

struct OracleCheck {
    std::string name;
    double value = 0.0;
    std::string op;  // ">=", "<=", "<", "=="
    double threshold = 0.0;
    double tolerance = 0.0;  // only used by "=="
    bool pass = false;
};

OracleCheck make_check(std::string name, double value, std::string op, double threshold, double tolerance = 0.0);

struct SynthRunConfig {
    std::uint64_t seed = 7;
    SynthConfig synth;      // seed replaced by a sub-seed of `seed`
    CorpusConfig corpus;    // likewise
    TrainConfig probe;      // likewise
    std::int64_t layer = 16;
    int kmeans_k = 6;
    double steer_alpha = 3.0;
    AlphaMode alpha_mode = AlphaMode::relative_to_mean_norm;
    int steer_trials_per_relation = 100;

    /// σ = 0 with no distractors: checks use ideal values.
    bool ideal() const { return synth.noise_sigma == 0.0 && synth.n_distractors == 0; }
};

struct SynthRunResult {
    Corpus corpus;
    LinearProbe probe;
    Subspace subspace;
    double probe_accuracy = 0.0;
    double variance_explained3 = 0.0;
    double subspace_error_deg = 0.0;
    std::vector<GeometryRow> inverse_rows;
    std::vector<GeometryRow> composition_rows;
    ClusterReportRow cluster;
    Matrix cluster_points;
    std::vector<std::string> cluster_labels;
    double min_group_alignment = 0.0;
    double max_mirrored_cosine = 0.0;
    std::vector<SteeringVector> steering_vectors;
    double min_steer_planted_cosine = 0.0;
    SteerReport steering;
    std::vector<OracleCheck> checks;
    double seconds = 0.0;

    bool all_pass() const;
};

SynthRunResult run_synth(const SynthRunConfig& cfg);

}  // namespace spatialprobe
