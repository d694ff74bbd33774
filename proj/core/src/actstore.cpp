#include "spatialprobe/actstore.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "spatialprobe/corpus.hpp"

namespace spatialprobe {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::array<char, 4> kMagic = {'A', 'C', 'T', 'F'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                   static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (in.gcount() != 4) {
        throw Error(ErrorCode::format, std::string("ACTF length mismatch: truncated while reading ") + what);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

// Reads in bounded chunks so a corrupt length field fails on truncation
// instead of allocating the claimed size up front.
std::string get_bytes(std::istream& in, std::size_t n, const char* what) {
    constexpr std::size_t kChunk = std::size_t{1} << 20;
    std::string s;
    while (s.size() < n) {
        const std::size_t want = std::min(kChunk, n - s.size());
        const std::size_t old = s.size();
        s.resize(old + want);
        in.read(s.data() + old, static_cast<std::streamsize>(want));
        if (static_cast<std::size_t>(in.gcount()) != want) {
            throw Error(ErrorCode::format, std::string("ACTF length mismatch: truncated ") + what);
        }
    }
    return s;
}

ordered_json header_json(const ActivationSet& set) {
    const auto& m = set.meta();
    ordered_json j;
    j["model_id"] = m.model_id;
    j["layer"] = m.layer;
    j["hook_point"] = m.hook_point;
    j["token_strategy"] = to_string(m.token_strategy);
    j["d_model"] = m.d_model;
    j["mean_row_norm"] = m.mean_row_norm;
    j["capture_seed"] = m.capture_seed;
    j["n"] = set.rows();
    j["d"] = set.dim();
    return j;
}

std::string label_line(const RowLabel& l) {
    ordered_json j;
    j["prompt_id"] = l.prompt_id;
    j["relation"] = l.relation;
    j["obj1"] = l.obj1;
    j["obj2"] = l.obj2;
    j["split"] = to_string(l.split);
    return j.dump();
}

}  // namespace

std::string_view to_string(TokenStrategy t) {
    return t == TokenStrategy::final_token_before_period ? "final_token_before_period" : "entity_span_mean";
}

TokenStrategy parse_token_strategy(std::string_view s) {
    if (s == "final_token_before_period") return TokenStrategy::final_token_before_period;
    if (s == "entity_span_mean") return TokenStrategy::entity_span_mean;
    throw Error(ErrorCode::invalid_argument, "unknown token strategy: " + std::string(s));
}

ActivationSet::ActivationSet(FloatMatrix data, CaptureMeta meta, std::vector<RowLabel> labels)
    : data_(std::move(data)), meta_(std::move(meta)), labels_(std::move(labels)) {
    if (meta_.layer < 0) throw Error(ErrorCode::invalid_argument, "layer must be >= 0");
    if (meta_.d_model < 1) throw Error(ErrorCode::invalid_argument, "d_model must be >= 1");
    if (!(meta_.mean_row_norm >= 0.0) || !std::isfinite(meta_.mean_row_norm)) {
        throw Error(ErrorCode::invalid_argument, "mean_row_norm must be finite and >= 0");
    }
    if (data_.cols() != meta_.d_model) {
        throw Error(ErrorCode::invalid_argument, "data width " + std::to_string(data_.cols()) +
                                                     " != d_model " + std::to_string(meta_.d_model));
    }
    if (static_cast<std::size_t>(data_.rows()) != labels_.size()) {
        throw Error(ErrorCode::invalid_argument, "label count " + std::to_string(labels_.size()) +
                                                     " != rows " + std::to_string(data_.rows()));
    }
    if (!data_.allFinite()) {
        throw Error(ErrorCode::numeric, "activation matrix contains non-finite values");
    }
    for (const auto& l : labels_) {
        if (find_relation(l.relation) == nullptr) {
            throw Error(ErrorCode::invalid_argument, "row label relation not in catalog: " + l.relation);
        }
    }
}

double mean_row_norm(const FloatMatrix& data) {
    if (data.rows() == 0) return 0.0;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) acc += data.row(i).cast<double>().norm();
    return acc / static_cast<double>(data.rows());
}

std::size_t write_actf(const ActivationSet& set, std::ostream& out) {
    // The constructor already rejects non-finite values; re-check in case the
    // set was produced by a moved-from or externally patched object.
    if (!set.data().allFinite()) throw Error(ErrorCode::numeric, "refusing to write non-finite activations");

    const std::string header = header_json(set).dump();
    std::string labels;
    for (const auto& l : set.labels()) {
        labels += label_line(l);
        labels += '\n';
    }

    out.write(kMagic.data(), 4);
    put_u32(out, kActfVersion);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    const auto* values = set.data().data();
    const std::size_t count = set.rows() * set.dim();
    std::string payload(count * 4, '\0');
    for (std::size_t i = 0; i < count; ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(values[i]);
        payload[4 * i + 0] = static_cast<char>(bits & 0xFF);
        payload[4 * i + 1] = static_cast<char>((bits >> 8) & 0xFF);
        payload[4 * i + 2] = static_cast<char>((bits >> 16) & 0xFF);
        payload[4 * i + 3] = static_cast<char>((bits >> 24) & 0xFF);
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));

    put_u32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(labels.data(), static_cast<std::streamsize>(labels.size()));
    if (!out) throw Error(ErrorCode::io, "ACTF write failed");
    return 4 + 4 + 4 + header.size() + payload.size() + 4 + labels.size();
}

std::size_t write_actf(const ActivationSet& set, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::io, "cannot open for writing: " + path);
    const auto n = write_actf(set, f);
    f.flush();
    if (!f) throw Error(ErrorCode::io, "write failed: " + path);
    return n;
}

ActivationSet read_actf(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (in.gcount() != 4 || magic != kMagic) throw Error(ErrorCode::format, "ACTF bad magic");
    const auto version = get_u32(in, "version");
    if (version != kActfVersion) {
        throw Error(ErrorCode::format, "ACTF unsupported version " + std::to_string(version));
    }
    const auto header_len = get_u32(in, "header length");
    const auto header_text = get_bytes(in, header_len, "header");

    CaptureMeta meta;
    std::size_t n = 0;
    std::size_t d = 0;
    try {
        auto h = nlohmann::json::parse(header_text);
        meta.model_id = h.at("model_id").get<std::string>();
        meta.layer = h.at("layer").get<std::int64_t>();
        meta.hook_point = h.at("hook_point").get<std::string>();
        meta.token_strategy = parse_token_strategy(h.at("token_strategy").get<std::string>());
        meta.d_model = h.at("d_model").get<std::int64_t>();
        meta.mean_row_norm = h.at("mean_row_norm").get<double>();
        meta.capture_seed = h.at("capture_seed").get<std::uint64_t>();
        n = h.at("n").get<std::size_t>();
        d = h.at("d").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format, std::string("ACTF bad header: ") + e.what());
    }
    if (static_cast<std::int64_t>(d) != meta.d_model) {
        throw Error(ErrorCode::format, "ACTF header d != d_model");
    }

    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / 4 / d) {
        throw Error(ErrorCode::format, "ACTF header n*d overflows");
    }
    const std::string payload = get_bytes(in, n * d * 4, "payload");
    FloatMatrix data(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    auto* values = data.data();
    for (std::size_t i = 0; i < n * d; ++i) {
        const auto* b = reinterpret_cast<const unsigned char*>(payload.data() + 4 * i);
        const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                   (static_cast<std::uint32_t>(b[2]) << 16) |
                                   (static_cast<std::uint32_t>(b[3]) << 24);
        values[i] = std::bit_cast<float>(bits);
    }

    const auto label_len = get_u32(in, "label block length");
    const auto label_text = get_bytes(in, label_len, "label block");
    if (in.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorCode::format, "ACTF length mismatch: trailing bytes after label block");
    }

    std::vector<RowLabel> labels;
    std::istringstream lines(label_text);
    std::string line;
    try {
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line);
            RowLabel l;
            l.prompt_id = j.at("prompt_id").get<std::int64_t>();
            l.relation = j.at("relation").get<std::string>();
            l.obj1 = j.at("obj1").get<std::string>();
            l.obj2 = j.at("obj2").get<std::string>();
            l.split = parse_split(j.at("split").get<std::string>());
            labels.push_back(std::move(l));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format, std::string("ACTF bad label line: ") + e.what());
    }
    if (labels.size() != n) {
        throw Error(ErrorCode::format, "ACTF label count " + std::to_string(labels.size()) + " != n " +
                                           std::to_string(n));
    }
    try {
        return ActivationSet(std::move(data), std::move(meta), std::move(labels));
    } catch (const Error& e) {
        throw Error(ErrorCode::format, std::string("ACTF invalid content: ") + e.what());
    }
}

ActivationSet read_actf(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::io, "cannot open ACTF file: " + path);
    return read_actf(f);
}

ActivationSet select(const ActivationSet& set, const RowPredicate& pred) {
    std::vector<Eigen::Index> keep;
    std::vector<RowLabel> labels;
    for (std::size_t i = 0; i < set.rows(); ++i) {
        if (pred(set.labels()[i])) {
            keep.push_back(static_cast<Eigen::Index>(i));
            labels.push_back(set.labels()[i]);
        }
    }
    FloatMatrix data(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(set.dim()));
    for (std::size_t k = 0; k < keep.size(); ++k) data.row(static_cast<Eigen::Index>(k)) = set.data().row(keep[k]);
    return ActivationSet(std::move(data), set.meta(), std::move(labels));
}

std::map<std::string, Vector> class_means(const ActivationSet& set) {
    std::map<std::string, Vector> sums;
    std::map<std::string, std::size_t> counts;
    for (std::size_t i = 0; i < set.rows(); ++i) {
        const auto& rel = set.labels()[i].relation;
        auto [it, inserted] = sums.try_emplace(rel, Vector::Zero(static_cast<Eigen::Index>(set.dim())));
        it->second += set.data().row(static_cast<Eigen::Index>(i)).cast<double>().transpose();
        ++counts[rel];
    }
    if (sums.empty()) throw Error(ErrorCode::invalid_argument, "class_means: empty activation set");
    for (auto& [rel, s] : sums) s /= static_cast<double>(counts[rel]);
    return sums;
}

std::map<std::string, Vector> class_means(const ActivationSet& set, const std::vector<std::string>& required) {
    for (const auto& rel : required) {
        const bool present = std::any_of(set.labels().begin(), set.labels().end(),
                                         [&](const RowLabel& l) { return l.relation == rel; });
        if (!present) throw Error(ErrorCode::invalid_argument, "class_means: empty class " + rel);
    }
    return class_means(set);
}

}  // namespace spatialprobe
