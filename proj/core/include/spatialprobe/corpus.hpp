#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spatialprobe/common.hpp"

namespace spatialprobe {

/// The raw object list used by the default corpus, in published order
/// (61 entries, "lamp" appears twice).
const std::vector<std::string>& default_object_nouns();

struct ObjectVocabulary {
    std::vector<std::string> entries;
    std::uint64_t split_seed = 0;
    double train_fraction = 0.9;
    /// Number of raw entries dropped as duplicates after normalization.
    std::size_t duplicates = 0;
};

/// Lowercases, trims and deduplicates `raw_nouns`, keeping first occurrences.
ObjectVocabulary build_vocabulary(std::span<const std::string> raw_nouns,
                                  std::uint64_t split_seed = 0,
                                  double train_fraction = 0.9);

struct VocabularySplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

/// Seeded split by object noun. |train| = round(train_fraction * N), clamped
/// so both sides are non-empty. Each side keeps vocabulary order.
VocabularySplit split_vocabulary(const ObjectVocabulary& vocab);

enum class RelationKind { atomic, composed };

using GridOffset = std::array<int, 3>;

struct RelationSpec {
    std::string id;
    std::string surface;
    GridOffset offset{};
    std::optional<std::string> inverse_id;
    RelationKind kind = RelationKind::atomic;
    std::vector<std::string> parts;
};

/// 2D: above/below/left/right plus the four diagonals.
/// 3D: the six atomics plus the twelve pairwise compositions of
/// non-opposite atomics. Axes: +x right, +y above, +z in front.
std::vector<RelationSpec> relation_catalog(Dimensionality dim);

/// Lookup against the 3D catalog, which is a superset of the 2D one.
const RelationSpec* find_relation(std::string_view id);
const RelationSpec& relation_or_throw(std::string_view id);
std::vector<std::string> atomic_relation_ids(Dimensionality dim);

using Position = std::array<double, 3>;

struct PromptRecord {
    std::int64_t id = 0;
    std::string obj1;
    std::string obj2;
    std::string relation;
    std::string sentence;
    Position p1{};
    Position p2{};
    Split split = Split::train;
    Dimensionality dimensionality = Dimensionality::three_d;
};

enum class PairMode { single, concatenated };

std::string instantiate_template(std::string_view obj1, std::string_view surface, std::string_view obj2);

/// Every ordered pair of distinct objects crossed with every relation, pair-major.
/// In concatenated mode each record gets a leading context sentence about obj2
/// so the annotated sentence stays last (capture happens at its final token).
std::vector<PromptRecord> generate_prompts(std::span<const std::string> objects,
                                           std::span<const RelationSpec> relations,
                                           Dimensionality dim,
                                           PairMode mode = PairMode::single,
                                           Split split = Split::train,
                                           std::int64_t first_id = 0);

struct CorpusConfig {
    Dimensionality dim = Dimensionality::three_d;
    PairMode mode = PairMode::single;
    std::uint64_t seed = 0;
    double train_fraction = 0.9;
    bool atomic_only = false;
};

struct Corpus {
    ObjectVocabulary vocabulary;
    VocabularySplit split;
    std::vector<RelationSpec> relations;
    std::vector<PromptRecord> records;  // train records first, then test
};

/// Full corpus over the default noun list.
Corpus build_corpus(const CorpusConfig& cfg);
Corpus build_corpus(const CorpusConfig& cfg, std::span<const std::string> raw_nouns);

// Line-delimited JSON, one record per line, fixed field order.
std::string to_jsonl(const PromptRecord& r);
PromptRecord prompt_from_jsonl(std::string_view line);
void write_corpus(std::ostream& out, std::span<const PromptRecord> records);
void write_corpus(const std::string& path, std::span<const PromptRecord> records);
std::vector<PromptRecord> read_corpus(std::istream& in);
std::vector<PromptRecord> read_corpus(const std::string& path);

PairMode parse_pair_mode(std::string_view s);
std::string_view to_string(PairMode m);

}  // namespace spatialprobe
