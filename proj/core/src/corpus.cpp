#include "spatialprobe/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

#include <json.hpp>

namespace spatialprobe {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string normalize_noun(std::string_view raw) {
    std::size_t b = 0;
    std::size_t e = raw.size();
    while (b < e && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(raw[e - 1]))) --e;
    std::string out(raw.substr(b, e - b));
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

struct AtomicDef {
    const char* id;
    const char* surface;
    const char* leading;  // form used as the first half of a diagonal
    GridOffset offset;
    const char* inverse;
};

constexpr AtomicDef kAtomics[] = {
    {"above", "above", "above", {0, 1, 0}, "below"},
    {"below", "below", "below", {0, -1, 0}, "above"},
    {"left", "to the left of", "to the left", {-1, 0, 0}, "right"},
    {"right", "to the right of", "to the right", {1, 0, 0}, "left"},
    {"in_front", "in front of", "in front", {0, 0, 1}, "behind"},
    {"behind", "behind", "behind", {0, 0, -1}, "in_front"},
};

// Row order of the published composition tables; the first four are the 2D set.
constexpr std::pair<const char*, const char*> kComposedPairs[] = {
    {"above", "right"},  {"above", "left"},     {"below", "right"},  {"below", "left"},
    {"above", "behind"}, {"above", "in_front"}, {"below", "behind"}, {"below", "in_front"},
    {"left", "behind"},  {"left", "in_front"},  {"right", "behind"}, {"right", "in_front"},
};

const AtomicDef& atomic_def(std::string_view id) {
    for (const auto& a : kAtomics) {
        if (id == a.id) return a;
    }
    throw Error(ErrorCode::not_found, "unknown atomic relation: " + std::string(id));
}

RelationSpec make_atomic(const AtomicDef& a) {
    RelationSpec r;
    r.id = a.id;
    r.surface = a.surface;
    r.offset = a.offset;
    r.inverse_id = a.inverse;
    r.kind = RelationKind::atomic;
    return r;
}

RelationSpec make_composed(std::string_view first, std::string_view second) {
    const auto& a = atomic_def(first);
    const auto& b = atomic_def(second);
    RelationSpec r;
    r.id = std::string(a.id) + "_" + b.id;
    r.surface = std::string("diagonally ") + a.leading + " and " + b.surface;
    for (int i = 0; i < 3; ++i) r.offset[i] = a.offset[i] + b.offset[i];
    r.kind = RelationKind::composed;
    r.parts = {a.id, b.id};
    // Inverse of a diagonal is the diagonal of the two inverses.
    r.inverse_id = std::string(a.inverse) + "_" + b.inverse;
    return r;
}

const std::vector<RelationSpec>& full_catalog() {
    static const std::vector<RelationSpec> catalog = relation_catalog(Dimensionality::three_d);
    return catalog;
}

Position to_position(const GridOffset& o) {
    return {static_cast<double>(o[0]), static_cast<double>(o[1]), static_cast<double>(o[2])};
}

}  // namespace

const std::vector<std::string>& default_object_nouns() {
    static const std::vector<std::string> nouns = {
        "book",     "mug",        "lamp",      "phone",      "remote",   "cushion",  "plate",
        "notebook", "pen",        "cup",       "clock",      "chair",    "table",    "keyboard",
        "mouse",    "bottle",     "plant",     "vase",       "wallet",   "bag",      "shoe",
        "hat",      "pencil",     "eraser",    "folder",     "speaker",  "picture",  "mirror",
        "pillow",   "blanket",    "carpet",    "painting",   "flower",   "stapler",  "calculator",
        "projector", "monitor",   "printer",   "scanner",    "microphone", "camera", "laptop",
        "tablet",   "mousepad",   "desk",      "couch",      "sofa",     "bed",      "dresser",
        "wardrobe", "bookshelf",  "stool",     "bench",      "armchair", "recliner", "footstool",
        "rug",      "curtain",    "chandelier", "lamp",      "candle",
    };
    return nouns;
}

ObjectVocabulary build_vocabulary(std::span<const std::string> raw_nouns, std::uint64_t split_seed,
                                  double train_fraction) {
    if (raw_nouns.empty()) {
        throw Error(ErrorCode::invalid_argument, "object list is empty");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error(ErrorCode::invalid_argument, "train_fraction must lie in (0,1)");
    }
    ObjectVocabulary v;
    v.split_seed = split_seed;
    v.train_fraction = train_fraction;
    std::unordered_set<std::string> seen;
    for (const auto& raw : raw_nouns) {
        auto noun = normalize_noun(raw);
        if (noun.empty()) {
            throw Error(ErrorCode::invalid_argument, "blank object noun");
        }
        if (seen.insert(noun).second) {
            v.entries.push_back(std::move(noun));
        } else {
            ++v.duplicates;
        }
    }
    return v;
}

VocabularySplit split_vocabulary(const ObjectVocabulary& vocab) {
    const std::size_t n = vocab.entries.size();
    if (n < 2) {
        throw Error(ErrorCode::invalid_argument, "need at least 2 objects to split");
    }
    auto n_train = static_cast<std::size_t>(std::llround(vocab.train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(vocab.split_seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(order[i], order[rng() % (i + 1)]);
    }
    std::vector<bool> is_train(n, false);
    for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = true;

    VocabularySplit s;
    for (std::size_t i = 0; i < n; ++i) {
        (is_train[i] ? s.train : s.test).push_back(vocab.entries[i]);
    }
    return s;
}

std::vector<RelationSpec> relation_catalog(Dimensionality dim) {
    std::vector<RelationSpec> out;
    const std::size_t n_atomic = dim == Dimensionality::two_d ? 4 : 6;
    const std::size_t n_composed = dim == Dimensionality::two_d ? 4 : 12;
    for (std::size_t i = 0; i < n_atomic; ++i) out.push_back(make_atomic(kAtomics[i]));
    for (std::size_t i = 0; i < n_composed; ++i) {
        out.push_back(make_composed(kComposedPairs[i].first, kComposedPairs[i].second));
    }
    return out;
}

const RelationSpec* find_relation(std::string_view id) {
    for (const auto& r : full_catalog()) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

const RelationSpec& relation_or_throw(std::string_view id) {
    if (const auto* r = find_relation(id)) return *r;
    throw Error(ErrorCode::not_found, "relation not in catalog: " + std::string(id));
}

std::vector<std::string> atomic_relation_ids(Dimensionality dim) {
    std::vector<std::string> ids;
    for (const auto& r : relation_catalog(dim)) {
        if (r.kind == RelationKind::atomic) ids.push_back(r.id);
    }
    return ids;
}

std::string instantiate_template(std::string_view obj1, std::string_view surface, std::string_view obj2) {
    std::string s = "The ";
    s.append(obj1).append(" is ").append(surface).append(" the ").append(obj2).append(".");
    return s;
}

std::vector<PromptRecord> generate_prompts(std::span<const std::string> objects,
                                           std::span<const RelationSpec> relations, Dimensionality dim,
                                           PairMode mode, Split split, std::int64_t first_id) {
    if (objects.size() < 2) {
        throw Error(ErrorCode::invalid_argument, "need at least 2 objects");
    }
    if (relations.empty()) {
        throw Error(ErrorCode::invalid_argument, "relation list is empty");
    }
    if (mode == PairMode::concatenated && objects.size() < 3) {
        throw Error(ErrorCode::invalid_argument, "concatenated prompts need at least 3 objects");
    }
    const std::size_t n = objects.size();
    std::vector<PromptRecord> out;
    out.reserve(n * (n - 1) * relations.size());
    std::int64_t id = first_id;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            for (std::size_t r = 0; r < relations.size(); ++r) {
                const auto& rel = relations[r];
                PromptRecord rec;
                rec.id = id++;
                rec.obj1 = objects[i];
                rec.obj2 = objects[j];
                rec.relation = rel.id;
                rec.sentence = instantiate_template(rec.obj1, rel.surface, rec.obj2);
                if (mode == PairMode::concatenated) {
                    // Context: obj2 relative to the next object that is neither obj1 nor obj2.
                    std::size_t c = (j + 1) % n;
                    while (c == i || c == j) c = (c + 1) % n;
                    const auto& ctx_rel = relations[(r + 1) % relations.size()];
                    rec.sentence = instantiate_template(objects[j], ctx_rel.surface, objects[c]) + " " + rec.sentence;
                }
                rec.p1 = to_position(rel.offset);
                rec.p2 = {0.0, 0.0, 0.0};
                rec.split = split;
                rec.dimensionality = dim;
                out.push_back(std::move(rec));
            }
        }
    }
    return out;
}

Corpus build_corpus(const CorpusConfig& cfg) {
    return build_corpus(cfg, default_object_nouns());
}

Corpus build_corpus(const CorpusConfig& cfg, std::span<const std::string> raw_nouns) {
    Corpus c;
    c.vocabulary = build_vocabulary(raw_nouns, cfg.seed, cfg.train_fraction);
    c.split = split_vocabulary(c.vocabulary);
    for (auto& r : relation_catalog(cfg.dim)) {
        if (!cfg.atomic_only || r.kind == RelationKind::atomic) c.relations.push_back(std::move(r));
    }
    c.records = generate_prompts(c.split.train, c.relations, cfg.dim, cfg.mode, Split::train, 0);
    auto test = generate_prompts(c.split.test, c.relations, cfg.dim, cfg.mode, Split::test,
                                 static_cast<std::int64_t>(c.records.size()));
    c.records.insert(c.records.end(), std::make_move_iterator(test.begin()),
                     std::make_move_iterator(test.end()));
    return c;
}

std::string to_jsonl(const PromptRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["obj1"] = r.obj1;
    j["obj2"] = r.obj2;
    j["relation"] = r.relation;
    j["sentence"] = r.sentence;
    j["p1"] = r.p1;
    j["p2"] = r.p2;
    j["split"] = to_string(r.split);
    j["dimensionality"] = to_string(r.dimensionality);
    return j.dump();
}

PromptRecord prompt_from_jsonl(std::string_view line) {
    try {
        auto j = nlohmann::json::parse(line);
        PromptRecord r;
        r.id = j.at("id").get<std::int64_t>();
        r.obj1 = j.at("obj1").get<std::string>();
        r.obj2 = j.at("obj2").get<std::string>();
        r.relation = j.at("relation").get<std::string>();
        r.sentence = j.at("sentence").get<std::string>();
        r.p1 = j.at("p1").get<Position>();
        r.p2 = j.at("p2").get<Position>();
        r.split = parse_split(j.at("split").get<std::string>());
        r.dimensionality = parse_dimensionality(j.at("dimensionality").get<std::string>());
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format, std::string("bad corpus record: ") + e.what());
    }
}

void write_corpus(std::ostream& out, std::span<const PromptRecord> records) {
    for (const auto& r : records) out << to_jsonl(r) << '\n';
}

void write_corpus(const std::string& path, std::span<const PromptRecord> records) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::io, "cannot open for writing: " + path);
    write_corpus(f, records);
    if (!f) throw Error(ErrorCode::io, "write failed: " + path);
}

std::vector<PromptRecord> read_corpus(std::istream& in) {
    std::vector<PromptRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(prompt_from_jsonl(line));
    }
    return out;
}

std::vector<PromptRecord> read_corpus(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::io, "cannot open corpus: " + path);
    return read_corpus(f);
}

PairMode parse_pair_mode(std::string_view s) {
    if (s == "single") return PairMode::single;
    if (s == "concat" || s == "concatenated") return PairMode::concatenated;
    throw Error(ErrorCode::invalid_argument, "unknown pair mode: " + std::string(s));
}

std::string_view to_string(PairMode m) {
    return m == PairMode::single ? "single" : "concat";
}

}  // namespace spatialprobe
