#include "spatialprobe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace spatialprobe {

using Index = Eigen::Index;

std::vector<std::pair<std::string, std::string>> inverse_pairs(std::span<const std::string> classes) {
    const auto has = [&](const std::string& id) { return std::find(classes.begin(), classes.end(), id) != classes.end(); };
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& r : relation_catalog(Dimensionality::three_d)) {
        if (r.kind != RelationKind::atomic || !r.inverse_id) continue;
        if (!has(r.id) || !has(*r.inverse_id)) continue;
        const bool seen = std::any_of(out.begin(), out.end(), [&](const auto& p) { return p.second == r.id; });
        if (!seen) out.emplace_back(r.id, *r.inverse_id);
    }
    return out;
}

Matrix direction_rows(const LinearProbe& probe, std::span<const std::string> classes, bool normalize) {
    Matrix rows(static_cast<Index>(classes.size()), probe.weights.cols());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        rows.row(static_cast<Index>(i)) = probe_direction(probe, classes[i], normalize).transpose();
    }
    return rows;
}

namespace {

std::vector<std::string> atomic_classes(const LinearProbe& probe) {
    std::vector<std::string> out;
    for (const auto& c : probe.classes) {
        const auto* spec = find_relation(c);
        if (spec && spec->kind == RelationKind::atomic) out.push_back(c);
    }
    return out;
}

GeometryRow geometry_row(std::int64_t layer, std::string label, Space space, double cos, std::optional<double> dist,
                         double angle) {
    GeometryRow row;
    row.layer = layer;
    row.pair_or_relation = std::move(label);
    row.space = space;
    row.cosine = cos;
    row.euclid_dist = dist;
    row.angle_deg = angle;
    return row;
}

}  // namespace

Subspace direction_subspace(const LinearProbe& probe, Index k, bool normalize) {
    const auto classes = atomic_classes(probe);
    if (classes.size() < 2) throw Error(ErrorCode::invalid_argument, "direction_subspace: need at least two atomic classes");
    return fit_pca(direction_rows(probe, classes, normalize), k, FitPopulation::directions);
}

std::vector<GeometryRow> inverse_report(const LinearProbe& probe, const Subspace* subspace, std::int64_t layer,
                                        bool normalize) {
    std::vector<GeometryRow> rows;
    const auto pairs = inverse_pairs(probe.classes);
    for (const auto& [a, b] : pairs) {
        const Vector wa = probe_direction(probe, a, normalize);
        const Vector wb = probe_direction(probe, b, normalize);
        const auto al = inverse_alignment(wa, wb, Space::original);
        rows.push_back(geometry_row(layer, a + "<->" + b, Space::original, al.cosine, std::nullopt, al.angle_deg));
    }
    if (subspace) {
        for (const auto& [a, b] : pairs) {
            const Vector za = project_direction(*subspace, probe_direction(probe, a, normalize));
            const Vector zb = project_direction(*subspace, probe_direction(probe, b, normalize));
            const auto al = inverse_alignment(za, zb, Space::pca);
            rows.push_back(geometry_row(layer, a + "<->" + b, Space::pca, al.cosine, std::nullopt, al.angle_deg));
        }
    }
    return rows;
}

std::vector<GeometryRow> composition_report(const std::map<std::string, Vector>& means, const Subspace* subspace,
                                            std::int64_t layer) {
    std::vector<GeometryRow> orig;
    std::vector<GeometryRow> pca;
    for (const auto& r : relation_catalog(Dimensionality::three_d)) {
        if (r.kind != RelationKind::composed || r.parts.size() != 2) continue;
        const auto ab = means.find(r.id);
        const auto a = means.find(r.parts[0]);
        const auto b = means.find(r.parts[1]);
        if (ab == means.end() || a == means.end() || b == means.end()) continue;
        const auto rep = composition_metrics(a->second, b->second, ab->second, subspace);
        orig.push_back(geometry_row(layer, r.id, Space::original, rep.original.cosine, rep.original.euclidean_distance,
                                    rep.original.angle_deg));
        if (rep.pca) {
            pca.push_back(
                geometry_row(layer, r.id, Space::pca, rep.pca->cosine, rep.pca->euclidean_distance, rep.pca->angle_deg));
        }
    }
    const auto append_mean = [&](std::vector<GeometryRow>& rows, Space space) {
        if (rows.empty()) return;
        double c = 0.0, d = 0.0, ang = 0.0;
        for (const auto& row : rows) {
            c += row.cosine;
            d += row.euclid_dist.value_or(0.0);
            ang += row.angle_deg;
        }
        const auto n = static_cast<double>(rows.size());
        rows.push_back(geometry_row(layer, "mean", space, c / n, d / n, ang / n));
    };
    append_mean(orig, Space::original);
    append_mean(pca, Space::pca);
    orig.insert(orig.end(), pca.begin(), pca.end());
    return orig;
}

OracleCheck make_check(std::string name, double value, std::string op, double threshold, double tolerance) {
    OracleCheck c{std::move(name), value, std::move(op), threshold, tolerance, false};
    if (c.op == ">=") c.pass = value >= threshold;
    else if (c.op == "<=") c.pass = value <= threshold;
    else if (c.op == "<") c.pass = value < threshold;
    else if (c.op == "==") c.pass = std::abs(value - threshold) <= tolerance;
    else throw Error(ErrorCode::invalid_argument, "unknown check operator: " + c.op);
    return c;
}

bool SynthRunResult::all_pass() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const OracleCheck& c) { return c.pass; });
}

namespace {

bool is_atomic(const std::string& relation) {
    return relation_or_throw(relation).kind == RelationKind::atomic;
}

std::vector<PromptRecord> filter_records(const std::vector<PromptRecord>& records, Split split, bool atomic_only) {
    std::vector<PromptRecord> out;
    for (const auto& r : records) {
        if (r.split == split && (!atomic_only || is_atomic(r.relation))) out.push_back(r);
    }
    return out;
}

Vector group_mean(const Matrix& points, std::span<const std::string> labels, const std::string& group) {
    Vector sum = Vector::Zero(points.cols());
    Index n = 0;
    for (Index i = 0; i < points.rows(); ++i) {
        if (labels[static_cast<std::size_t>(i)] != group) continue;
        sum += points.row(i).transpose();
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::invalid_argument, "empty group: " + group);
    return sum / static_cast<double>(n);
}

}  // namespace

SynthRunResult run_synth(const SynthRunConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    SynthRunResult out;

    CorpusConfig corpus_cfg = cfg.corpus;
    corpus_cfg.seed = derive_seed(cfg.seed, "corpus");
    out.corpus = build_corpus(corpus_cfg);

    SynthConfig synth_cfg = cfg.synth;
    synth_cfg.seed = derive_seed(cfg.seed, "synth");
    const SynthWorld world(synth_cfg);

    const auto dim = corpus_cfg.dim;
    const auto atomics = atomic_relation_ids(dim);
    const Index k = dim == Dimensionality::three_d ? 3 : 2;

    const auto train_records = filter_records(out.corpus.records, Split::train, false);
    const auto test_records = filter_records(out.corpus.records, Split::test, true);
    const ActivationSet train = synth_dataset(train_records, world, ObjectSlot::sentence, cfg.layer);
    const ActivationSet test = synth_dataset(test_records, world, ObjectSlot::sentence, cfg.layer);
    const ActivationSet train_atomic = select(train, [](const RowLabel& l) { return is_atomic(l.relation); });

    TrainConfig probe_cfg = cfg.probe;
    probe_cfg.seed = derive_seed(cfg.seed, "probe");
    out.probe = train_logistic(train_atomic, probe_cfg, ProbeMode::one_vs_rest, atomics);
    out.probe_accuracy = evaluate(out.probe, test);

    out.subspace = direction_subspace(out.probe, k);
    out.variance_explained3 = variance_explained_topk(out.subspace, k);
    out.subspace_error_deg = subspace_recovery_error(out.subspace, world.basis().topRows(k));
    out.inverse_rows = inverse_report(out.probe, &out.subspace, cfg.layer);
    out.composition_rows = composition_report(class_means(train), &out.subspace, cfg.layer);

    // Object embeddings of unseen test nouns, clustered in the probe subspace.
    const ActivationSet obj1 = synth_dataset(test_records, world, ObjectSlot::object1, cfg.layer);
    const ActivationSet obj2 = synth_dataset(test_records, world, ObjectSlot::object2, cfg.layer);
    out.cluster_points = project_directions(out.subspace, obj1.to_double());
    for (const auto& l : obj1.labels()) out.cluster_labels.push_back(l.relation);
    const auto kmeans_seed = derive_seed(cfg.seed, "kmeans");
    const auto clusters = kmeans(out.cluster_points, cfg.kmeans_k, kmeans_seed);
    out.cluster = {cfg.layer, "obj1", cfg.kmeans_k, purity(clusters.assignment, out.cluster_labels), clusters.inertia,
                   kmeans_seed};

    const Matrix obj2_points = project_directions(out.subspace, obj2.to_double());
    out.min_group_alignment = std::numeric_limits<double>::infinity();
    out.max_mirrored_cosine = -std::numeric_limits<double>::infinity();
    for (const auto& rel : atomics) {
        out.min_group_alignment = std::min(
            out.min_group_alignment, group_alignment(obj1, rel, probe_direction(out.probe, rel, true), out.subspace));
        const Vector m1 = group_mean(out.cluster_points, out.cluster_labels, rel);
        const Vector m2 = group_mean(obj2_points, out.cluster_labels, rel);
        out.max_mirrored_cosine = std::max(out.max_mirrored_cosine, cosine(m1, m2));
    }

    // Steering: push activations of the inverse relation towards the target and
    // read the probe's verdict back out as a sentence.
    const double mean_norm = test.meta().mean_row_norm;
    out.min_steer_planted_cosine = std::numeric_limits<double>::infinity();
    std::vector<const PromptRecord*> steer_pool;
    for (const auto& r : test_records) steer_pool.push_back(&r);
    for (const auto& r : train_records) steer_pool.push_back(&r);
    std::vector<SteerTrial> trials;
    for (const auto& rel : atomics) {
        const auto& spec = relation_or_throw(rel);
        const Vector z = project_direction(out.subspace, probe_direction(out.probe, rel, true));
        auto sv = build_steering_vector(out.subspace, z, rel, cfg.layer, cfg.steer_alpha, cfg.alpha_mode, mean_norm);
        out.min_steer_planted_cosine =
            std::min(out.min_steer_planted_cosine, cosine(sv.v, world.planted_direction(spec.offset)));

        int taken = 0;
        for (std::size_t i = 0; i < steer_pool.size() && taken < cfg.steer_trials_per_relation; ++i) {
            const auto& rec = *steer_pool[i];
            if (rec.relation != *spec.inverse_id) continue;
            const Vector steered = sv.apply(world.activation(rec).cast<float>().cast<double>());
            const auto predicted = out.probe.classes[static_cast<std::size_t>(argmax_lowest(out.probe.scores(steered)))];
            const auto generated = instantiate_template(rec.obj1, relation_or_throw(predicted).surface, rec.obj2);
            trials.push_back(make_trial(rec.sentence, rel, generated));
            ++taken;
        }
        out.steering_vectors.push_back(std::move(sv));
    }
    out.steering = score(trials, atomics);
    out.steering.alpha = cfg.steer_alpha;

    const auto metric = [&](const std::vector<GeometryRow>& rows, Space space, bool want_min) {
        double v = want_min ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        for (const auto& r : rows) {
            if (r.space != space || r.pair_or_relation == "mean") continue;
            v = want_min ? std::min(v, r.cosine) : std::max(v, r.cosine);
        }
        return v;
    };

    auto& c = out.checks;
    if (cfg.ideal()) {
        c.push_back(make_check("probe_accuracy", out.probe_accuracy, "==", 1.0, 0.0));
        c.push_back(make_check("inverse_cosine_min_original", metric(out.inverse_rows, Space::original, true), "==", 1.0, 1e-6));
        c.push_back(make_check("inverse_cosine_min_pca", metric(out.inverse_rows, Space::pca, true), "==", 1.0, 1e-6));
        c.push_back(make_check("composition_cosine_min_original", metric(out.composition_rows, Space::original, true), "==", 1.0, 1e-6));
        c.push_back(make_check("composition_cosine_min_pca", metric(out.composition_rows, Space::pca, true), "==", 1.0, 1e-6));
        c.push_back(make_check("purity", out.cluster.purity, "==", 1.0, 0.0));
        c.push_back(make_check("variance_explained_k", out.variance_explained3, "==", 1.0, 1e-9));
        c.push_back(make_check("subspace_error_deg", out.subspace_error_deg, "<", 1e-3));
        c.push_back(make_check("group_alignment_min", out.min_group_alignment, ">=", 0.99));
    } else {
        c.push_back(make_check("probe_accuracy", out.probe_accuracy, ">=", 0.99));
        c.push_back(make_check("subspace_error_deg", out.subspace_error_deg, "<", 5.0));
        c.push_back(make_check("composition_cosine_min_pca", metric(out.composition_rows, Space::pca, true), ">=", 0.98));
        c.push_back(make_check("purity", out.cluster.purity, ">=", 0.95));
        c.push_back(make_check("inverse_cosine_min_pca", metric(out.inverse_rows, Space::pca, true), ">=", 0.98));
        c.push_back(make_check("group_alignment_min", out.min_group_alignment, ">=", 0.95));
    }
    c.push_back(make_check("mirrored_pair_cosine_max", out.max_mirrored_cosine, "<=", -0.9));
    c.push_back(make_check("steer_planted_cosine_min", out.min_steer_planted_cosine, ">=", 0.95));

    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    c.push_back(make_check("runtime_seconds", out.seconds, "<", 300.0));
    return out;
}

}  // namespace spatialprobe
