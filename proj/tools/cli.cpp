#include "cli.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "run_config.hpp"
#include "spatialprobe/actstore.hpp"
#include "spatialprobe/geometry.hpp"
#include "spatialprobe/objmap.hpp"
#include "spatialprobe/pipeline.hpp"
#include "spatialprobe/probe_io.hpp"
#include "spatialprobe/probekit.hpp"
#include "spatialprobe/steerlab.hpp"

namespace fs = std::filesystem;

namespace spatialprobe::cli {

namespace {

struct StageError : std::runtime_error {
    StageError(std::string stage_, const std::string& message, std::optional<std::string> path_ = std::nullopt)
        : std::runtime_error(message), stage(std::move(stage_)), path(std::move(path_)) {}
    std::string stage;
    std::optional<std::string> path;
};

void print_error(std::ostream& err, const std::string& stage, const std::string& message,
                 const std::optional<std::string>& path) {
    ordered_json j;
    j["stage"] = stage;
    j["message"] = message;
    if (path) j["path"] = *path;
    err << j.dump() << '\n';
}

// Wraps a stage body so library errors carry the stage name and the path in play.
template <typename F>
auto at_path(const std::string& stage, const std::string& path, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what(), path);
    }
}

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

std::ofstream open_out(const std::string& stage, const std::string& path) {
    ensure_parent(path);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw StageError(stage, "cannot open for writing", path);
    return f;
}

std::ifstream open_in(const std::string& stage, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw StageError(stage, "cannot open for reading", path);
    return f;
}

void write_sidecar(const std::string& stage, const std::string& artifact, const RunConfig& cfg, ordered_json extra) {
    ordered_json j;
    j["artifact"] = fs::path(artifact).filename().string();
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    for (auto& [k, v] : extra.items()) j[k] = v;
    auto f = open_out(stage, artifact + ".meta.json");
    f << j.dump(2) << '\n';
}

std::vector<std::string> atomic_classes_of(const ActivationSet& acts) {
    std::vector<std::string> out;
    for (const auto& c : present_classes(acts)) {
        if (relation_or_throw(c).kind == RelationKind::atomic) out.push_back(c);
    }
    return out;
}

Eigen::Index pca_k(const RunConfig& cfg, std::size_t atomic_count) {
    if (cfg.pca.k > 0) return cfg.pca.k;
    return atomic_count >= 6 ? 3 : 2;
}

std::string layer_name(std::int64_t layer) { return "layer" + std::to_string(layer); }

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

int run_process(const std::vector<std::string>& argv) {
    std::vector<char*> cargs;
    for (const auto& a : argv) cargs.push_back(const_cast<char*>(a.c_str()));
    cargs.push_back(nullptr);
    const pid_t pid = fork();
    if (pid < 0) throw StageError("extract", std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
        execvp(cargs[0], cargs.data());
        _exit(127);
    }
    int status = 0;
    while (waitpid(pid, &status, 0) < 0) {
        if (errno != EINTR) throw StageError("extract", std::string("waitpid failed: ") + std::strerror(errno));
    }
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
}

std::vector<std::string> split_words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

// ---------------------------------------------------------------------------

int cmd_gen_corpus(RunConfig cfg, const std::string& out_path, std::ostream& out) {
    const auto corpus_cfg = [&] {
        auto c = cfg.corpus;
        c.seed = cfg.stage_seed("corpus");
        return c;
    }();
    const Corpus corpus = at_path("gen-corpus", out_path, [&] { return build_corpus(corpus_cfg); });
    at_path("gen-corpus", out_path, [&] {
        ensure_parent(out_path);
        write_corpus(out_path, corpus.records);
    });
    write_sidecar("gen-corpus", out_path, cfg,
                  {{"records", corpus.records.size()},
                   {"objects", corpus.vocabulary.entries.size()},
                   {"duplicates_dropped", corpus.vocabulary.duplicates},
                   {"train_objects", corpus.split.train},
                   {"test_objects", corpus.split.test}});
    out << "wrote " << corpus.records.size() << " records (" << corpus.vocabulary.entries.size() << " objects, "
        << corpus.vocabulary.duplicates << " duplicate dropped) to " << out_path << '\n';
    return kOk;
}

int cmd_extract(const RunConfig& cfg, const std::string& corpus_path, const std::string& out_dir, std::ostream& out) {
    const auto records = at_path("extract", corpus_path, [&] { return read_corpus(corpus_path); });
    fs::create_directories(out_dir);

    ordered_json job;
    job["model_id"] = cfg.model_id;
    job["corpus"] = fs::absolute(corpus_path).string();
    job["layers"] = cfg.layers;
    job["hook_point"] = cfg.extractor.hook_point;
    job["token_strategy"] = to_string(cfg.extractor.token_strategy);
    job["output_dir"] = fs::absolute(out_dir).string();
    job["device"] = cfg.extractor.device;
    ordered_json outputs = ordered_json::object();
    for (auto layer : cfg.layers) {
        outputs[std::to_string(layer)] = (fs::absolute(out_dir) / (layer_name(layer) + ".actf")).string();
    }
    job["outputs"] = outputs;
    job["config_hash"] = config_hash(cfg);
    job["seed"] = cfg.seed;
    const std::string job_path = (fs::path(out_dir) / "extract_job.json").string();
    {
        auto f = open_out("extract", job_path);
        f << job.dump(2) << '\n';
    }

    auto argv = cfg.extractor.command;
    argv.push_back(job_path);
    const int code = run_process(argv);
    if (code != 0) {
        throw StageError("extract", "extractor exited with code " + std::to_string(code), job_path);
    }

    std::optional<std::int64_t> d_model;
    for (auto layer : cfg.layers) {
        const std::string path = outputs[std::to_string(layer)].get<std::string>();
        if (!fs::exists(path)) throw StageError("extract", "extractor did not produce the expected file", path);
        const auto acts = at_path("extract", path, [&] { return read_actf(path); });
        const auto& m = acts.meta();
        const auto fail = [&](const std::string& why) { throw StageError("extract", why, path); };
        if (m.layer != layer) fail("layer mismatch: expected " + std::to_string(layer) + ", got " + std::to_string(m.layer));
        if (m.model_id != cfg.model_id) fail("model_id mismatch: expected " + cfg.model_id + ", got " + m.model_id);
        if (m.hook_point != cfg.extractor.hook_point) fail("hook_point mismatch: " + m.hook_point);
        if (m.token_strategy != cfg.extractor.token_strategy) fail("token_strategy mismatch");
        if (acts.rows() != records.size()) {
            fail("row count " + std::to_string(acts.rows()) + " does not match corpus size " +
                 std::to_string(records.size()));
        }
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (acts.labels()[i].prompt_id != records[i].id) fail("row " + std::to_string(i) + " is out of corpus order");
        }
        if (d_model && *d_model != m.d_model) fail("d_model differs between layers");
        d_model = m.d_model;
        write_sidecar("extract", path, cfg, {{"layer", layer}, {"rows", acts.rows()}, {"d_model", m.d_model}});
        out << "validated " << path << " (" << acts.rows() << " x " << m.d_model << ")\n";
    }
    return kOk;
}

int cmd_train_probes(const RunConfig& cfg, const std::vector<std::string>& acts_paths, const std::string& out_dir,
                     std::ostream& out) {
    fs::create_directories(out_dir);
    const std::string table_path = (fs::path(out_dir) / "probe_accuracy.csv").string();
    std::ostringstream table;
    table << "# " << provenance(cfg) << '\n' << "layer,kind,classes,train_accuracy,test_accuracy\n";

    for (const auto& path : acts_paths) {
        const auto acts = at_path("train-probes", path, [&] { return read_actf(path); });
        const auto train = select(acts, [](const RowLabel& l) {
            return l.split == Split::train && relation_or_throw(l.relation).kind == RelationKind::atomic;
        });
        const auto test = select(acts, [](const RowLabel& l) {
            return l.split == Split::test && relation_or_throw(l.relation).kind == RelationKind::atomic;
        });
        const auto classes = at_path("train-probes", path, [&] { return atomic_classes_of(train); });
        TrainConfig tc = cfg.probe;
        tc.seed = derive_seed(cfg.stage_seed("probe"), layer_name(acts.meta().layer));
        const auto layer = acts.meta().layer;
        const std::string probe_path = (fs::path(out_dir) / ("probe_" + layer_name(layer) + ".prbf")).string();

        double train_acc = 0.0;
        std::optional<double> test_acc;
        at_path("train-probes", path, [&] {
            if (cfg.probe_kind == "mlp") {
                const auto p = train_mlp(train, tc, classes);
                train_acc = evaluate(p, train);
                if (test.rows() > 0) test_acc = evaluate(p, test);
                write_probe(p, probe_path);
            } else {
                const auto p = cfg.probe_kind == "least_squares" ? train_least_squares_probe(train, tc.ridge, classes)
                                                                 : train_logistic(train, tc, cfg.probe_mode, classes);
                train_acc = evaluate(p, train);
                if (test.rows() > 0) test_acc = evaluate(p, test);
                write_probe(p, probe_path);
            }
        });
        write_sidecar("train-probes", probe_path, cfg, {{"source", path}, {"layer", layer}, {"kind", cfg.probe_kind}});
        table << layer << ',' << cfg.probe_kind << ',' << classes.size() << ',' << fixed(train_acc, 4) << ','
              << (test_acc ? fixed(*test_acc, 4) : std::string()) << '\n';
        out << "layer " << layer << ": train accuracy " << fixed(train_acc, 4);
        if (test_acc) out << ", test accuracy " << fixed(*test_acc, 4);
        out << " -> " << probe_path << '\n';
    }
    auto f = open_out("train-probes", table_path);
    f << table.str();
    return kOk;
}

void write_geometry(const std::string& stage, const RunConfig& cfg, const std::vector<GeometryRow>& rows,
                    const std::string& csv_path, const std::optional<std::string>& json_path) {
    {
        auto f = open_out(stage, csv_path);
        write_geometry_csv(f, rows, provenance(cfg));
    }
    if (json_path) {
        auto f = open_out(stage, *json_path);
        write_geometry_json(f, rows, provenance(cfg));
    }
}

int cmd_analyze_inverse(const RunConfig& cfg, const std::vector<std::string>& probe_paths, const std::string& out_csv,
                        const std::optional<std::string>& out_json, std::ostream& out) {
    std::vector<GeometryRow> rows;
    for (const auto& path : probe_paths) {
        const auto probe = at_path("analyze-inverse", path, [&] { return read_linear_probe(path); });
        at_path("analyze-inverse", path, [&] {
            std::vector<std::string> atomics;
            for (const auto& c : probe.classes) {
                if (relation_or_throw(c).kind == RelationKind::atomic) atomics.push_back(c);
            }
            const auto subspace = direction_subspace(probe, pca_k(cfg, atomics.size()), cfg.pca.normalize);
            auto r = inverse_report(probe, &subspace, probe.trained_on.layer, cfg.pca.normalize);
            rows.insert(rows.end(), r.begin(), r.end());
        });
    }
    write_geometry("analyze-inverse", cfg, rows, out_csv, out_json);
    for (const auto& r : rows) {
        out << "layer " << r.layer << ' ' << r.pair_or_relation << ' ' << to_string(r.space) << ": cosine "
            << fixed(r.cosine, 4) << ", angle " << fixed(r.angle_deg, 2) << '\n';
    }
    return kOk;
}

int cmd_analyze_composition(const RunConfig& cfg, const std::string& acts_path, const std::string& probe_path,
                            const std::string& out_csv, const std::optional<std::string>& out_json, std::ostream& out) {
    const auto acts = at_path("analyze-composition", acts_path, [&] { return read_actf(acts_path); });
    const auto probe = at_path("analyze-composition", probe_path, [&] { return read_linear_probe(probe_path); });
    if (probe.weights.cols() != static_cast<Eigen::Index>(acts.dim())) {
        throw StageError("analyze-composition", "probe and activation dimensions differ", probe_path);
    }
    const auto rows = at_path("analyze-composition", acts_path, [&] {
        const auto subspace = direction_subspace(probe, pca_k(cfg, atomic_classes_of(acts).size()), cfg.pca.normalize);
        return composition_report(class_means(acts), &subspace, acts.meta().layer);
    });
    if (rows.empty()) throw StageError("analyze-composition", "no composed relation with both parts present", acts_path);
    write_geometry("analyze-composition", cfg, rows, out_csv, out_json);
    for (const auto& r : rows) {
        out << r.pair_or_relation << ' ' << to_string(r.space) << ": cosine " << fixed(r.cosine, 4) << ", angle "
            << fixed(r.angle_deg, 2) << '\n';
    }
    return kOk;
}

int cmd_analyze_objects(const RunConfig& cfg, const std::string& acts_path, const std::string& probe_path,
                        const std::string& slot, const std::string& out_csv, const std::optional<std::string>& points_csv,
                        std::ostream& out) {
    const auto acts_all = at_path("analyze-objects", acts_path, [&] { return read_actf(acts_path); });
    const auto acts = select(acts_all, [](const RowLabel& l) {
        return relation_or_throw(l.relation).kind == RelationKind::atomic;
    });
    const auto probe = at_path("analyze-objects", probe_path, [&] { return read_linear_probe(probe_path); });
    const auto classes = atomic_classes_of(acts);
    const int k = cfg.kmeans_k > 0 ? cfg.kmeans_k : static_cast<int>(classes.size());
    const auto seed = cfg.stage_seed("kmeans");

    at_path("analyze-objects", acts_path, [&] {
        const auto subspace = direction_subspace(probe, pca_k(cfg, classes.size()), cfg.pca.normalize);
        const Matrix points = project_directions(subspace, acts.to_double());
        std::vector<std::string> labels;
        for (const auto& l : acts.labels()) labels.push_back(l.relation);
        const auto clusters = kmeans(points, k, seed);
        const double p = purity(clusters.assignment, labels);
        {
            auto f = open_out("analyze-objects", out_csv);
            write_cluster_csv(f, {{acts.meta().layer, slot, k, p, clusters.inertia, seed}}, provenance(cfg));
        }
        if (points_csv) {
            auto f = open_out("analyze-objects", *points_csv);
            write_points_csv(f, points, labels, provenance(cfg));
        }
        out << "layer " << acts.meta().layer << ' ' << slot << ": k=" << k << " purity " << fixed(p, 4)
            << ", variance explained " << fixed(variance_explained_topk(subspace, subspace.k()), 4) << '\n';
        for (const auto& c : classes) {
            if (std::find(probe.classes.begin(), probe.classes.end(), c) == probe.classes.end()) continue;
            out << "  " << c << " alignment " << fixed(group_alignment(acts, c, probe_direction(probe, c, true), subspace), 4)
                << '\n';
        }
    });
    return kOk;
}

int cmd_analyze_boundaries(const RunConfig& cfg, const std::string& probe_path, const std::string& out_csv,
                           std::ostream& out) {
    const auto probe = at_path("analyze-boundaries", probe_path, [&] { return read_linear_probe(probe_path); });
    std::vector<std::string> atomics;
    for (const auto& c : probe.classes) {
        if (relation_or_throw(c).kind == RelationKind::atomic) atomics.push_back(c);
    }
    std::ostringstream csv;
    at_path("analyze-boundaries", probe_path, [&] {
        const auto subspace = direction_subspace(probe, cfg.pca.k > 0 ? cfg.pca.k : 2, cfg.pca.normalize);
        const auto k = subspace.k();
        csv << "# " << provenance(cfg) << '\n' << "layer,class_a,class_b";
        for (Eigen::Index j = 0; j < k; ++j) csv << ",normal_" << j;
        for (Eigen::Index j = 0; j < k; ++j) csv << ",point_" << j;
        csv << '\n';
        for (std::size_t a = 0; a < atomics.size(); ++a) {
            for (std::size_t b = a + 1; b < atomics.size(); ++b) {
                const Vector za = project_direction(subspace, probe_direction(probe, atomics[a], cfg.pca.normalize));
                const Vector zb = project_direction(subspace, probe_direction(probe, atomics[b], cfg.pca.normalize));
                const auto line = decision_boundary(za, zb);
                csv << probe.trained_on.layer << ',' << atomics[a] << ',' << atomics[b];
                for (Eigen::Index j = 0; j < k; ++j) csv << ',' << fixed(line.normal(j), 6);
                for (Eigen::Index j = 0; j < k; ++j) csv << ',' << fixed(line.point(j), 6);
                csv << '\n';
            }
        }
    });
    auto f = open_out("analyze-boundaries", out_csv);
    f << csv.str();
    out << "wrote " << atomics.size() * (atomics.size() - 1) / 2 << " boundaries to " << out_csv << '\n';
    return kOk;
}

int cmd_build_steer(const RunConfig& cfg, const std::string& probe_path, const std::string& acts_path,
                    const std::string& corpus_path, const std::string& out_dir, std::ostream& out) {
    const auto probe = at_path("build-steer", probe_path, [&] { return read_linear_probe(probe_path); });
    const auto acts = at_path("build-steer", acts_path, [&] { return read_actf(acts_path); });
    const auto records = at_path("build-steer", corpus_path, [&] { return read_corpus(corpus_path); });
    if (probe.weights.cols() != static_cast<Eigen::Index>(acts.dim())) {
        throw StageError("build-steer", "probe and activation dimensions differ", probe_path);
    }
    fs::create_directories(out_dir);

    std::vector<std::string> atomics;
    for (const auto& c : probe.classes) {
        if (relation_or_throw(c).kind == RelationKind::atomic) atomics.push_back(c);
    }
    const auto subspace = at_path("build-steer", probe_path, [&] {
        return direction_subspace(probe, pca_k(cfg, atomics.size()), cfg.pca.normalize);
    });

    // Prompts that currently express the opposite relation, preferring unseen objects.
    const auto prompts_for = [&](const std::string& relation) {
        const auto inverse = relation_or_throw(relation).inverse_id;
        std::vector<std::string> picked;
        for (const Split split : {Split::test, Split::train}) {
            for (const auto& r : records) {
                if (static_cast<int>(picked.size()) >= cfg.steering.trials_per_relation) break;
                if (r.split == split && inverse && r.relation == *inverse) picked.push_back(r.sentence);
            }
        }
        return picked;
    };

    std::vector<std::string> refs;
    for (const auto& rel : atomics) {
        const std::string strv = (fs::absolute(out_dir) / ("steer_" + rel + ".strv")).string();
        refs.push_back(strv);
    }

    for (std::size_t ai = 0; ai < cfg.steering.alphas.size(); ++ai) {
        const double alpha = cfg.steering.alphas[ai];
        std::vector<TrialRequest> batch;
        for (std::size_t i = 0; i < atomics.size(); ++i) {
            const auto& rel = atomics[i];
            const Vector z = project_direction(subspace, probe_direction(probe, rel, true));
            const auto sv = at_path("build-steer", probe_path, [&] {
                return build_steering_vector(subspace, z, rel, probe.trained_on.layer, alpha, cfg.steering.alpha_mode,
                                             acts.meta().mean_row_norm);
            });
            if (ai == 0) {
                at_path("build-steer", refs[i], [&] { write_strv(sv.v, refs[i]); });
                write_sidecar("build-steer", refs[i], cfg, {{"relation", rel}, {"layer", sv.layer}});
            }
            const auto prompts = prompts_for(rel);
            if (prompts.empty()) continue;
            const std::vector<SteeringVector> one{sv};
            const std::vector<std::string> one_ref{refs[i]};
            auto planned = plan_trials(one, one_ref, prompts, cfg.steering.question_template, cfg.steering.max_new_tokens);
            for (auto& t : planned) {
                t.trial_id = static_cast<std::int64_t>(batch.size());
                batch.push_back(std::move(t));
            }
        }
        if (batch.empty()) throw StageError("build-steer", "corpus has no prompts for any inverse relation", corpus_path);
        const std::string batch_path = (fs::path(out_dir) / ("trials_" + std::to_string(ai) + ".jsonl")).string();
        auto f = open_out("build-steer", batch_path);
        const auto n = emit_trial_batch(batch, f);
        f.close();
        write_sidecar("build-steer", batch_path, cfg,
                      {{"alpha", alpha}, {"alpha_mode", to_string(cfg.steering.alpha_mode)}, {"trials", n}});
        out << "alpha " << alpha << ": " << n << " trials -> " << batch_path << '\n';
    }
    return kOk;
}

int cmd_score_steer(const RunConfig& cfg, const std::string& batch_path, const std::string& results_path,
                    const std::string& out_csv, std::optional<double> alpha, std::ostream& out) {
    auto bin = open_in("score-steer", batch_path);
    const auto batch = at_path("score-steer", batch_path, [&] { return read_trial_batch(bin); });
    auto rin = open_in("score-steer", results_path);
    const auto results = at_path("score-steer", results_path, [&] { return read_trial_results(rin); });
    const auto trials = join_trials(batch, results);
    auto report = at_path("score-steer", batch_path, [&] { return score(trials); });
    report.alpha = alpha;
    {
        auto f = open_out("score-steer", out_csv);
        write_steer_report_csv(f, report, provenance(cfg));
    }
    for (const auto& r : report.per_relation) {
        out << r.relation << ": " << r.successes << '/' << r.cases << " (" << fixed(100.0 * r.rate, 1) << "%, CI "
            << fixed(100.0 * r.ci.low, 1) << "-" << fixed(100.0 * r.ci.high, 1) << ")\n";
    }
    out << "overall: " << report.overall.successes << '/' << report.overall.cases << " ("
        << fixed(100.0 * report.overall.rate, 1) << "%, CI " << fixed(100.0 * report.overall.ci.low, 1) << "-"
        << fixed(100.0 * report.overall.ci.high, 1) << ")\n";
    return kOk;
}

int cmd_synth_run(const RunConfig& cfg, const std::optional<std::string>& out_dir, std::ostream& out) {
    const auto run_cfg = to_synth_run(cfg);
    const auto result = [&] {
        try {
            return run_synth(run_cfg);
        } catch (const std::exception& e) {
            throw StageError("synth-run", e.what());
        }
    }();

    for (const auto& c : result.checks) {
        out << (c.pass ? "PASS " : "FAIL ") << c.name << " = " << std::setprecision(12) << c.value << ' ' << c.op << ' '
            << c.threshold;
        if (c.op == "==") out << " +/- " << c.tolerance;
        out << '\n';
    }
    out << (result.all_pass() ? "oracle summary: all checks passed" : "oracle summary: FAILED") << '\n';

    if (out_dir) {
        const auto dir = fs::path(*out_dir);
        fs::create_directories(dir);
        const auto p = provenance(cfg);
        const auto path = [&](const char* name) { return (dir / name).string(); };
        {
            auto f = open_out("synth-run", path("inverse.csv"));
            write_geometry_csv(f, result.inverse_rows, p);
        }
        {
            auto f = open_out("synth-run", path("composition.csv"));
            write_geometry_csv(f, result.composition_rows, p);
        }
        {
            auto f = open_out("synth-run", path("clusters.csv"));
            write_cluster_csv(f, {result.cluster}, p);
        }
        {
            auto f = open_out("synth-run", path("points.csv"));
            write_points_csv(f, result.cluster_points, result.cluster_labels, p);
        }
        {
            auto f = open_out("synth-run", path("steering.csv"));
            write_steer_report_csv(f, result.steering, p);
        }
        {
            ordered_json j;
            j["config_hash"] = config_hash(cfg);
            j["seed"] = cfg.seed;
            j["config"] = to_json(cfg);
            j["all_pass"] = result.all_pass();
            ordered_json checks = ordered_json::array();
            for (const auto& c : result.checks) {
                if (c.name == "runtime_seconds") continue;  // wall clock would break byte-reproducibility
                checks.push_back({{"name", c.name}, {"value", c.value}, {"op", c.op}, {"threshold", c.threshold},
                                  {"tolerance", c.tolerance}, {"pass", c.pass}});
            }
            j["checks"] = checks;
            auto f = open_out("synth-run", path("summary.json"));
            f << j.dump(2) << '\n';
        }
    }
    if (!result.all_pass()) {
        std::string failed;
        for (const auto& c : result.checks) {
            if (!c.pass) failed += (failed.empty() ? "" : ", ") + c.name;
        }
        throw StageError("synth-run", "oracle checks failed: " + failed);
    }
    return kOk;
}

int cmd_report(const RunConfig& cfg, const std::vector<std::string>& inverse_paths,
               const std::vector<std::string>& composition_paths, const std::string& out_dir, std::ostream& out) {
    if (inverse_paths.empty() && composition_paths.empty()) {
        throw StageError("report", "nothing to report: pass --inverse and/or --composition");
    }
    fs::create_directories(out_dir);

    struct Cell {
        std::optional<GeometryRow> orig, pca;
    };
    const auto collect = [&](const std::vector<std::string>& paths) {
        std::vector<std::pair<std::int64_t, std::string>> order;
        std::map<std::pair<std::int64_t, std::string>, Cell> cells;
        for (const auto& path : paths) {
            auto f = open_in("report", path);
            const auto rows = at_path("report", path, [&] { return read_geometry_json(f); });
            for (const auto& r : rows) {
                const auto key = std::make_pair(r.layer, r.pair_or_relation);
                if (!cells.contains(key)) order.push_back(key);
                auto& cell = cells[key];
                (r.space == Space::original ? cell.orig : cell.pca) = r;
            }
        }
        return std::make_pair(order, cells);
    };
    const auto opt = [](const std::optional<GeometryRow>& r, auto get, int digits) {
        return r ? fixed(get(*r), digits) : std::string();
    };
    const auto cos_of = [](const GeometryRow& r) { return r.cosine; };
    const auto ang_of = [](const GeometryRow& r) { return r.angle_deg; };
    const auto dist_of = [](const GeometryRow& r) { return r.euclid_dist.value_or(0.0); };

    if (!inverse_paths.empty()) {
        const auto [order, cells] = collect(inverse_paths);
        const std::string path = (fs::path(out_dir) / "table_inverse.csv").string();
        auto f = open_out("report", path);
        f << "# " << provenance(cfg) << '\n' << "layer,pair,orig_cosine,orig_angle_deg,pca_cosine,pca_angle_deg\n";
        for (const auto& key : order) {
            const auto& c = cells.at(key);
            f << key.first << ',' << key.second << ',' << opt(c.orig, cos_of, 4) << ',' << opt(c.orig, ang_of, 2) << ','
              << opt(c.pca, cos_of, 4) << ',' << opt(c.pca, ang_of, 2) << '\n';
        }
        out << "wrote " << path << '\n';
    }
    if (!composition_paths.empty()) {
        const auto [order, cells] = collect(composition_paths);
        const std::string path = (fs::path(out_dir) / "table_composition.csv").string();
        auto f = open_out("report", path);
        f << "# " << provenance(cfg) << '\n'
          << "layer,relation,orig_cosine,orig_euclid_dist,orig_angle_deg,pca_cosine,pca_euclid_dist,pca_angle_deg\n";
        for (const auto& key : order) {
            const auto& c = cells.at(key);
            f << key.first << ',' << key.second << ',' << opt(c.orig, cos_of, 4) << ',' << opt(c.orig, dist_of, 2) << ','
              << opt(c.orig, ang_of, 2) << ',' << opt(c.pca, cos_of, 4) << ',' << opt(c.pca, dist_of, 2) << ','
              << opt(c.pca, ang_of, 2) << '\n';
        }
        out << "wrote " << path << '\n';
    }
    return kOk;
}

}  // namespace

int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatial-relation probing pipeline", "spatialprobe"};
    app.require_subcommand(1, 1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    // Options shared by every subcommand. Precedence: defaults < --config < flags.
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_path, out_dir, corpus_path, probe_path, acts_path, json_path, points_path, slot = "obj1";
    std::string batch_path, results_path, dim = "3d", mode = "single", model_id, extractor_cmd, layers_csv;
    std::vector<std::string> acts_paths, probe_paths, inverse_paths, composition_paths;
    double train_fraction = 0.9, alpha = 0.0, sigma = 0.0, distractor_scale = 5.0;
    std::int64_t distractors = 0, d_model = 64;
    int k = 0;
    std::string probe_kind, alpha_mode;
    bool non_compositional = false;

    std::map<std::string, CLI::Option*> given;
    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Global seed");
    };
    std::vector<std::pair<CLI::App*, std::function<int(RunConfig&)>>> commands;
    const auto track = [&](CLI::App* sub, const char* name, CLI::Option* o) { given[std::string(sub->get_name()) + ":" + name] = o; };
    const auto flag_given = [&](const CLI::App* sub, const char* name) {
        const auto it = given.find(std::string(sub->get_name()) + ":" + name);
        return it != given.end() && it->second->count() > 0;
    };

    auto* gen = app.add_subcommand("gen-corpus", "Generate the templated spatial-relation corpus");
    common(gen);
    track(gen, "dim", gen->add_option("--dim", dim, "2d or 3d"));
    track(gen, "mode", gen->add_option("--mode", mode, "single or concat"));
    track(gen, "train-fraction", gen->add_option("--train-fraction", train_fraction));
    gen->add_option("--out", out_path, "Output JSONL")->required();
    commands.emplace_back(gen, [&](RunConfig& cfg) {
        if (flag_given(gen, "dim")) cfg.corpus.dim = parse_dimensionality(dim);
        if (flag_given(gen, "mode")) cfg.corpus.mode = parse_pair_mode(mode);
        if (flag_given(gen, "train-fraction")) cfg.corpus.train_fraction = train_fraction;
        cfg.validate();
        return cmd_gen_corpus(cfg, out_path, out);
    });

    auto* ext = app.add_subcommand("extract", "Capture activations through the external extractor");
    common(ext);
    ext->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
    ext->add_option("--out-dir", out_dir)->required();
    track(ext, "model-id", ext->add_option("--model-id", model_id));
    track(ext, "layers", ext->add_option("--layers", layers_csv, "Comma-separated layer list"));
    track(ext, "extractor", ext->add_option("--extractor", extractor_cmd, "Extractor command line"));
    commands.emplace_back(ext, [&](RunConfig& cfg) {
        if (flag_given(ext, "model-id")) cfg.model_id = model_id;
        if (flag_given(ext, "extractor")) cfg.extractor.command = split_words(extractor_cmd);
        if (flag_given(ext, "layers")) {
            cfg.layers.clear();
            std::stringstream ss(layers_csv);
            for (std::string tok; std::getline(ss, tok, ',');) {
                try {
                    cfg.layers.push_back(std::stoll(tok));
                } catch (const std::exception&) {
                    throw CLI::ValidationError("--layers", "not an integer: " + tok);
                }
            }
        }
        cfg.validate();
        return cmd_extract(cfg, corpus_path, out_dir, out);
    });

    auto* train = app.add_subcommand("train-probes", "Train one probe per activation file");
    common(train);
    train->add_option("--acts", acts_paths, "ACTF files")->required()->check(CLI::ExistingFile);
    train->add_option("--out-dir", out_dir)->required();
    track(train, "kind", train->add_option("--kind", probe_kind, "logistic, least_squares or mlp"));
    commands.emplace_back(train, [&](RunConfig& cfg) {
        if (flag_given(train, "kind")) cfg.probe_kind = probe_kind;
        cfg.validate();
        return cmd_train_probes(cfg, acts_paths, out_dir, out);
    });

    auto* inv = app.add_subcommand("analyze-inverse", "Antipodality of inverse relation pairs");
    common(inv);
    inv->add_option("--probe", probe_paths)->required()->check(CLI::ExistingFile);
    inv->add_option("--out", out_path, "CSV report")->required();
    auto* inv_json = inv->add_option("--json", json_path, "Full-precision JSON mirror");
    track(inv, "k", inv->add_option("--k", k, "PCA dimension"));
    commands.emplace_back(inv, [&](RunConfig& cfg) {
        if (flag_given(inv, "k")) cfg.pca.k = k;
        cfg.validate();
        return cmd_analyze_inverse(cfg, probe_paths, out_path,
                                   inv_json->count() ? std::optional(json_path) : std::nullopt, out);
    });

    auto* comp = app.add_subcommand("analyze-composition", "Vector composition of relation means");
    common(comp);
    comp->add_option("--acts", acts_path)->required()->check(CLI::ExistingFile);
    comp->add_option("--probe", probe_path)->required()->check(CLI::ExistingFile);
    comp->add_option("--out", out_path)->required();
    auto* comp_json = comp->add_option("--json", json_path);
    track(comp, "k", comp->add_option("--k", k));
    commands.emplace_back(comp, [&](RunConfig& cfg) {
        if (flag_given(comp, "k")) cfg.pca.k = k;
        cfg.validate();
        return cmd_analyze_composition(cfg, acts_path, probe_path, out_path,
                                       comp_json->count() ? std::optional(json_path) : std::nullopt, out);
    });

    auto* obj = app.add_subcommand("analyze-objects", "Cluster object embeddings in the probe subspace");
    common(obj);
    obj->add_option("--acts", acts_path)->required()->check(CLI::ExistingFile);
    obj->add_option("--probe", probe_path)->required()->check(CLI::ExistingFile);
    obj->add_option("--out", out_path)->required();
    auto* obj_points = obj->add_option("--points", points_path, "Projected-point dump");
    obj->add_option("--slot", slot, "Label for the object slot");
    track(obj, "k", obj->add_option("--k", k, "Number of clusters"));
    commands.emplace_back(obj, [&](RunConfig& cfg) {
        if (flag_given(obj, "k")) cfg.kmeans_k = k;
        cfg.validate();
        return cmd_analyze_objects(cfg, acts_path, probe_path, slot, out_path,
                                   obj_points->count() ? std::optional(points_path) : std::nullopt, out);
    });

    auto* bnd = app.add_subcommand("analyze-boundaries", "Pairwise decision boundaries in the PCA plane");
    common(bnd);
    bnd->add_option("--probe", probe_path)->required()->check(CLI::ExistingFile);
    bnd->add_option("--out", out_path)->required();
    track(bnd, "k", bnd->add_option("--k", k));
    commands.emplace_back(bnd, [&](RunConfig& cfg) {
        if (flag_given(bnd, "k")) cfg.pca.k = k;
        cfg.validate();
        return cmd_analyze_boundaries(cfg, probe_path, out_path, out);
    });

    auto* bst = app.add_subcommand("build-steer", "Write steering vectors and a trial batch");
    common(bst);
    bst->add_option("--probe", probe_path)->required()->check(CLI::ExistingFile);
    bst->add_option("--acts", acts_path, "Activations for the mean row norm")->required()->check(CLI::ExistingFile);
    bst->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
    bst->add_option("--out-dir", out_dir)->required();
    track(bst, "alpha", bst->add_option("--alpha", alpha, "Single steering strength"));
    track(bst, "alpha-mode", bst->add_option("--alpha-mode", alpha_mode, "absolute or relative"));
    commands.emplace_back(bst, [&](RunConfig& cfg) {
        if (flag_given(bst, "alpha")) cfg.steering.alphas = {alpha};
        if (flag_given(bst, "alpha-mode")) cfg.steering.alpha_mode = parse_alpha_mode(alpha_mode);
        cfg.validate();
        return cmd_build_steer(cfg, probe_path, acts_path, corpus_path, out_dir, out);
    });

    auto* sco = app.add_subcommand("score-steer", "Score steered generations");
    common(sco);
    sco->add_option("--batch", batch_path)->required()->check(CLI::ExistingFile);
    sco->add_option("--results", results_path)->required()->check(CLI::ExistingFile);
    sco->add_option("--out", out_path)->required();
    track(sco, "alpha", sco->add_option("--alpha", alpha, "Nominal alpha recorded in the report"));
    commands.emplace_back(sco, [&](RunConfig& cfg) {
        cfg.validate();
        return cmd_score_steer(cfg, batch_path, results_path, out_path,
                               flag_given(sco, "alpha") ? std::optional(alpha) : std::nullopt, out);
    });

    auto* syn = app.add_subcommand("synth-run", "End-to-end run on the synthetic world with oracle checks");
    common(syn);
    auto* syn_out = syn->add_option("--out-dir", out_dir, "Write reports here");
    track(syn, "sigma", syn->add_option("--sigma", sigma, "Noise standard deviation"));
    track(syn, "distractors", syn->add_option("--distractors", distractors));
    track(syn, "distractor-scale", syn->add_option("--distractor-scale", distractor_scale));
    track(syn, "d-model", syn->add_option("--d-model", d_model));
    track(syn, "dim", syn->add_option("--dim", dim));
    track(syn, "non-compositional", syn->add_flag("--non-compositional", non_compositional));
    commands.emplace_back(syn, [&](RunConfig& cfg) {
        if (flag_given(syn, "sigma")) cfg.synth.noise_sigma = sigma;
        if (flag_given(syn, "distractors")) cfg.synth.n_distractors = distractors;
        if (flag_given(syn, "distractor-scale")) cfg.synth.distractor_scale = distractor_scale;
        if (flag_given(syn, "d-model")) cfg.synth.d_model = d_model;
        if (flag_given(syn, "dim")) cfg.corpus.dim = parse_dimensionality(dim);
        if (flag_given(syn, "non-compositional")) cfg.synth.compositional = false;
        cfg.validate();
        return cmd_synth_run(cfg, syn_out->count() ? std::optional(out_dir) : std::nullopt, out);
    });

    auto* rep = app.add_subcommand("report", "Collect geometry JSON reports into summary tables");
    common(rep);
    rep->add_option("--inverse", inverse_paths)->check(CLI::ExistingFile);
    rep->add_option("--composition", composition_paths)->check(CLI::ExistingFile);
    rep->add_option("--out-dir", out_dir)->required();
    commands.emplace_back(rep, [&](RunConfig& cfg) {
        cfg.validate();
        return cmd_report(cfg, inverse_paths, composition_paths, out_dir, out);
    });

    std::vector<std::string> argv_store{"spatialprobe"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << app.help();
        print_error(err, "usage", e.what(), std::nullopt);
        return kUsage;
    }

    std::string stage = "config";
    try {
        for (auto& [sub, run] : commands) {
            if (!sub->parsed()) continue;
            stage = sub->get_name();
            RunConfig cfg;
            if (!config_path.empty()) {
                cfg = at_path("config", config_path, [&] { return load_run_config(config_path); });
            }
            if (sub->get_option("--seed")->count() > 0) cfg.seed = seed;
            return run(cfg);
        }
    } catch (const StageError& e) {
        print_error(err, e.stage, e.what(), e.path);
        return kStageFailure;
    } catch (const CLI::ValidationError& e) {
        print_error(err, "usage", e.what(), std::nullopt);
        return kUsage;
    } catch (const Error& e) {
        const bool usage = e.code() == ErrorCode::invalid_argument;
        print_error(err, usage ? "usage" : stage, e.what(), std::nullopt);
        return usage ? kUsage : kStageFailure;
    } catch (const std::exception& e) {
        print_error(err, stage, e.what(), std::nullopt);
        return kStageFailure;
    }
    err << app.help();
    print_error(err, "usage", "no subcommand given", std::nullopt);
    return kUsage;
}

}  // namespace spatialprobe::cli
