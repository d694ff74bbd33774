#include "run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

namespace spatialprobe::cli {

namespace {

void require_known_keys(const ordered_json& j, std::string_view section, std::initializer_list<std::string_view> keys) {
    if (!j.is_object()) throw Error(ErrorCode::format, "config section '" + std::string(section) + "' must be an object");
    const std::set<std::string_view> allowed(keys);
    for (const auto& [k, _] : j.items()) {
        if (!allowed.contains(k)) {
            throw Error(ErrorCode::format, "unknown config key '" + std::string(section) + "." + k + "'");
        }
    }
}

template <typename T>
void take(const ordered_json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

template <typename F>
void take_with(const ordered_json& j, const char* key, F&& parse) {
    if (j.contains(key)) parse(j.at(key).get<std::string>());
}

}  // namespace

void RunConfig::validate() const {
    if (layers.empty()) throw Error(ErrorCode::invalid_argument, "layers must be non-empty");
    for (auto l : layers) {
        if (l < 0) throw Error(ErrorCode::invalid_argument, "layers must be >= 0");
    }
    if (probe_kind != "logistic" && probe_kind != "least_squares" && probe_kind != "mlp") {
        throw Error(ErrorCode::invalid_argument, "probe kind must be logistic, least_squares or mlp");
    }
    if (!(corpus.train_fraction > 0.0 && corpus.train_fraction < 1.0)) {
        throw Error(ErrorCode::invalid_argument, "train_fraction must lie in (0,1)");
    }
    if (pca.k < 0 || kmeans_k < 0) throw Error(ErrorCode::invalid_argument, "k must be >= 0");
    if (steering.alphas.empty()) throw Error(ErrorCode::invalid_argument, "steering.alphas must be non-empty");
    if (steering.trials_per_relation < 1) throw Error(ErrorCode::invalid_argument, "trials_per_relation must be >= 1");
    if (extractor.command.empty()) throw Error(ErrorCode::invalid_argument, "extractor.command must be non-empty");
    probe.validate();
    synth.validate();
}

ordered_json to_json(const RunConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["model_id"] = c.model_id;
    j["layers"] = c.layers;
    j["corpus"] = {{"dim", to_string(c.corpus.dim)},
                   {"mode", to_string(c.corpus.mode)},
                   {"train_fraction", c.corpus.train_fraction},
                   {"atomic_only", c.corpus.atomic_only}};
    j["probe"] = {{"kind", c.probe_kind},
                  {"mode", to_string(c.probe_mode)},
                  {"learning_rate", c.probe.learning_rate},
                  {"batch_size", c.probe.batch_size},
                  {"max_epochs", c.probe.max_epochs},
                  {"early_stop_patience", c.probe.early_stop_patience},
                  {"val_fraction", c.probe.val_fraction},
                  {"ridge", c.probe.ridge},
                  {"center", c.probe.center},
                  {"optimizer", to_string(c.probe.optimizer)},
                  {"hidden_width", c.probe.hidden_width}};
    j["pca"] = {{"k", c.pca.k}, {"normalize", c.pca.normalize}};
    j["kmeans_k"] = c.kmeans_k;
    j["steering"] = {{"alphas", c.steering.alphas},
                     {"alpha_mode", to_string(c.steering.alpha_mode)},
                     {"trials_per_relation", c.steering.trials_per_relation},
                     {"max_new_tokens", c.steering.max_new_tokens},
                     {"question_template", c.steering.question_template}};
    j["synth"] = {{"d_model", c.synth.d_model},
                  {"noise_sigma", c.synth.noise_sigma},
                  {"n_distractors", c.synth.n_distractors},
                  {"distractor_scale", c.synth.distractor_scale},
                  {"signal_scale", c.synth.signal_scale},
                  {"compositional", c.synth.compositional}};
    j["extractor"] = {{"command", c.extractor.command},
                      {"hook_point", c.extractor.hook_point},
                      {"token_strategy", to_string(c.extractor.token_strategy)},
                      {"device", c.extractor.device}};
    j["out_dir"] = c.out_dir;
    return j;
}

void merge_json(RunConfig& c, const ordered_json& j) {
    require_known_keys(j, "config",
                       {"seed", "model_id", "layers", "corpus", "probe", "pca", "kmeans_k", "steering", "synth",
                        "extractor", "out_dir"});
    try {
        take(j, "seed", c.seed);
        take(j, "model_id", c.model_id);
        take(j, "layers", c.layers);
        take(j, "kmeans_k", c.kmeans_k);
        take(j, "out_dir", c.out_dir);
        if (j.contains("corpus")) {
            const auto& s = j.at("corpus");
            require_known_keys(s, "corpus", {"dim", "mode", "train_fraction", "atomic_only"});
            take_with(s, "dim", [&](const std::string& v) { c.corpus.dim = parse_dimensionality(v); });
            take_with(s, "mode", [&](const std::string& v) { c.corpus.mode = parse_pair_mode(v); });
            take(s, "train_fraction", c.corpus.train_fraction);
            take(s, "atomic_only", c.corpus.atomic_only);
        }
        if (j.contains("probe")) {
            const auto& s = j.at("probe");
            require_known_keys(s, "probe",
                               {"kind", "mode", "learning_rate", "batch_size", "max_epochs", "early_stop_patience",
                                "val_fraction", "ridge", "center", "optimizer", "hidden_width"});
            take(s, "kind", c.probe_kind);
            take_with(s, "mode", [&](const std::string& v) { c.probe_mode = parse_probe_mode(v); });
            take(s, "learning_rate", c.probe.learning_rate);
            take(s, "batch_size", c.probe.batch_size);
            take(s, "max_epochs", c.probe.max_epochs);
            take(s, "early_stop_patience", c.probe.early_stop_patience);
            take(s, "val_fraction", c.probe.val_fraction);
            take(s, "ridge", c.probe.ridge);
            take(s, "center", c.probe.center);
            take_with(s, "optimizer", [&](const std::string& v) { c.probe.optimizer = parse_optimizer(v); });
            take(s, "hidden_width", c.probe.hidden_width);
        }
        if (j.contains("pca")) {
            const auto& s = j.at("pca");
            require_known_keys(s, "pca", {"k", "normalize"});
            take(s, "k", c.pca.k);
            take(s, "normalize", c.pca.normalize);
        }
        if (j.contains("steering")) {
            const auto& s = j.at("steering");
            require_known_keys(s, "steering",
                               {"alphas", "alpha_mode", "trials_per_relation", "max_new_tokens", "question_template"});
            take(s, "alphas", c.steering.alphas);
            take_with(s, "alpha_mode", [&](const std::string& v) { c.steering.alpha_mode = parse_alpha_mode(v); });
            take(s, "trials_per_relation", c.steering.trials_per_relation);
            take(s, "max_new_tokens", c.steering.max_new_tokens);
            take(s, "question_template", c.steering.question_template);
        }
        if (j.contains("synth")) {
            const auto& s = j.at("synth");
            require_known_keys(s, "synth",
                               {"d_model", "noise_sigma", "n_distractors", "distractor_scale", "signal_scale",
                                "compositional"});
            take(s, "d_model", c.synth.d_model);
            take(s, "noise_sigma", c.synth.noise_sigma);
            take(s, "n_distractors", c.synth.n_distractors);
            take(s, "distractor_scale", c.synth.distractor_scale);
            take(s, "signal_scale", c.synth.signal_scale);
            take(s, "compositional", c.synth.compositional);
        }
        if (j.contains("extractor")) {
            const auto& s = j.at("extractor");
            require_known_keys(s, "extractor", {"command", "hook_point", "token_strategy", "device"});
            take(s, "command", c.extractor.command);
            take(s, "hook_point", c.extractor.hook_point);
            take_with(s, "token_strategy",
                      [&](const std::string& v) { c.extractor.token_strategy = parse_token_strategy(v); });
            take(s, "device", c.extractor.device);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format, std::string("config: ") + e.what());
    }
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open config: " + path);
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::format, "config is not valid JSON: " + std::string(e.what()));
    }
    RunConfig cfg;
    merge_json(cfg, j);
    return cfg;
}

std::string config_hash(const RunConfig& cfg) {
    return hex64(fnv1a64(to_json(cfg).dump()));
}

std::string provenance(const RunConfig& cfg) {
    return provenance_tag(to_json(cfg).dump(), cfg.seed);
}

SynthRunConfig to_synth_run(const RunConfig& cfg) {
    SynthRunConfig s;
    s.seed = cfg.seed;
    s.synth = cfg.synth;
    s.corpus = cfg.corpus;
    s.corpus.atomic_only = false;
    s.probe = cfg.probe;
    s.layer = cfg.layers.size() > 1 ? cfg.layers[1] : cfg.layers.front();
    s.kmeans_k = cfg.kmeans_k > 0 ? cfg.kmeans_k
                                  : static_cast<int>(atomic_relation_ids(cfg.corpus.dim).size());
    s.steer_alpha = cfg.steering.alphas.front();
    s.alpha_mode = cfg.steering.alpha_mode;
    s.steer_trials_per_relation = cfg.steering.trials_per_relation;
    return s;
}

}  // namespace spatialprobe::cli
