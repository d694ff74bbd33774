#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "spatialprobe/corpus.hpp"
#include "spatialprobe/pipeline.hpp"
#include "spatialprobe/probekit.hpp"
#include "spatialprobe/steerlab.hpp"
#include "spatialprobe/synthworld.hpp"

namespace spatialprobe::cli {

using ordered_json = nlohmann::ordered_json;

struct PcaSettings {
    int k = 0;  // 0: 3 for six atomic classes, otherwise 2
    bool normalize = true;
};

struct SteeringSettings {
    std::vector<double> alphas{3.0};
    AlphaMode alpha_mode = AlphaMode::relative_to_mean_norm;
    int trials_per_relation = 100;
    std::int64_t max_new_tokens = 20;
    std::string question_template{kDefaultQuestionTemplate};
};

struct ExtractorSettings {
    std::vector<std::string> command{"python3", "-m", "spatialprobe_extractor"};
    std::string hook_point{kDefaultHookPoint};
    TokenStrategy token_strategy = TokenStrategy::final_token_before_period;
    std::string device = "cpu";
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string model_id = "meta-llama/Llama-3.2-3B";
    std::vector<std::int64_t> layers{8, 16, 24};
    CorpusConfig corpus;
    std::string probe_kind = "logistic";  // logistic | least_squares | mlp
    ProbeMode probe_mode = ProbeMode::one_vs_rest;
    TrainConfig probe;
    PcaSettings pca;
    int kmeans_k = 0;  // 0: number of atomic classes
    SteeringSettings steering;
    SynthConfig synth;
    ExtractorSettings extractor;
    std::string out_dir = ".";

    void validate() const;
    /// Sub-seeds for every stage derive from `seed`.
    std::uint64_t stage_seed(std::string_view stage) const { return derive_seed(seed, stage); }
};

ordered_json to_json(const RunConfig& cfg);
/// Overlays the fields present in `j` onto `cfg`. Unknown keys are rejected.
void merge_json(RunConfig& cfg, const ordered_json& j);
RunConfig load_run_config(const std::string& path);

/// Hash of the canonical (fully resolved) config document.
std::string config_hash(const RunConfig& cfg);
std::string provenance(const RunConfig& cfg);

SynthRunConfig to_synth_run(const RunConfig& cfg);

}  // namespace spatialprobe::cli
