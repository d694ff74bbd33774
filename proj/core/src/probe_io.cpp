#include "spatialprobe/probe_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace spatialprobe {

namespace {

using ordered_json = nlohmann::ordered_json;
using Index = Eigen::Index;

constexpr std::array<char, 4> kMagic = {'P', 'R', 'B', 'F'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (in.gcount() != 4) throw Error(ErrorCode::format, "PRBF truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

ordered_json config_json(const TrainConfig& c) {
    ordered_json j;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["early_stop_patience"] = c.early_stop_patience;
    j["val_fraction"] = c.val_fraction;
    j["seed"] = c.seed;
    j["ridge"] = c.ridge;
    j["center"] = c.center;
    j["optimizer"] = to_string(c.optimizer);
    j["hidden_width"] = c.hidden_width;
    return j;
}

TrainConfig config_from(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.early_stop_patience = j.at("early_stop_patience").get<int>();
    c.val_fraction = j.at("val_fraction").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.ridge = j.at("ridge").get<double>();
    c.center = j.at("center").get<bool>();
    c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.hidden_width = j.at("hidden_width").get<int>();
    return c;
}

ordered_json summary_json(const ProbeSummary& s) {
    ordered_json j;
    j["model_id"] = s.model_id;
    j["layer"] = s.layer;
    j["hook_point"] = s.hook_point;
    j["d_model"] = s.d_model;
    return j;
}

ProbeSummary summary_from(const nlohmann::json& j) {
    return {j.at("model_id").get<std::string>(), j.at("layer").get<std::int64_t>(),
            j.at("hook_point").get<std::string>(), j.at("d_model").get<std::int64_t>()};
}

ordered_json log_json(const TrainingLog& l) {
    ordered_json j;
    j["epochs_run"] = l.epochs_run;
    j["best_epoch"] = l.best_epoch;
    j["best_val_loss"] = l.best_val_loss;
    j["val_losses"] = l.val_losses;
    return j;
}

TrainingLog log_from(const nlohmann::json& j) {
    TrainingLog l;
    l.epochs_run = j.at("epochs_run").get<int>();
    l.best_epoch = j.at("best_epoch").get<int>();
    l.best_val_loss = j.at("best_val_loss").get<double>();
    l.val_losses = j.at("val_losses").get<std::vector<double>>();
    return l;
}

void append_floats(std::vector<float>& out, const Matrix& m) {
    // Row-major order regardless of Eigen's storage.
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) out.push_back(static_cast<float>(m(r, c)));
}

void append_floats(std::vector<float>& out, const Vector& v) {
    for (Index i = 0; i < v.size(); ++i) out.push_back(static_cast<float>(v(i)));
}

std::size_t emit(std::ostream& out, const ordered_json& header, const std::vector<float>& params) {
    std::string buf(kMagic.begin(), kMagic.end());
    put_u32(buf, kPrbfVersion);
    const auto text = header.dump();
    put_u32(buf, static_cast<std::uint32_t>(text.size()));
    buf += text;
    for (float f : params) put_u32(buf, std::bit_cast<std::uint32_t>(f));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error(ErrorCode::io, "PRBF write failed");
    return buf.size();
}

class FloatCursor {
public:
    explicit FloatCursor(std::vector<float> v) : values_(std::move(v)) {}

    Matrix take(Index rows, Index cols) {
        Matrix m(rows, cols);
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c) m(r, c) = next();
        return m;
    }
    Vector take(Index n) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v(i) = next();
        return v;
    }
    bool exhausted() const { return pos_ == values_.size(); }

private:
    double next() {
        if (pos_ >= values_.size()) throw Error(ErrorCode::format, "PRBF parameter block too short");
        return static_cast<double>(values_[pos_++]);
    }
    std::vector<float> values_;
    std::size_t pos_ = 0;
};

template <class Probe>
std::size_t write_to_path(const Probe& p, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::io, "cannot open for writing: " + path);
    return write_probe(p, f);
}

}  // namespace

std::size_t write_probe(const LinearProbe& probe, std::ostream& out) {
    std::vector<float> params;
    append_floats(params, probe.weights);
    append_floats(params, probe.bias);
    append_floats(params, probe.input_mean);

    ordered_json h;
    h["kind"] = "linear";
    h["classes"] = probe.classes;
    h["dims"] = {probe.weights.cols(), probe.weights.rows()};
    h["objective"] = to_string(probe.objective);
    h["mode"] = to_string(probe.mode);
    h["config"] = config_json(probe.config);
    h["seed"] = probe.config.seed;
    h["trained_on"] = summary_json(probe.trained_on);
    h["centered"] = probe.input_mean.size() > 0;
    auto logs = ordered_json::array();
    for (const auto& l : probe.logs) logs.push_back(log_json(l));
    h["logs"] = logs;
    h["param_count"] = params.size();
    return emit(out, h, params);
}

std::size_t write_probe(const MlpProbe& probe, std::ostream& out) {
    std::vector<float> params;
    append_floats(params, probe.w1);
    append_floats(params, probe.b1);
    append_floats(params, probe.w2);
    append_floats(params, probe.b2);
    append_floats(params, probe.input_mean);

    const auto dims = probe.layer_dims();
    ordered_json h;
    h["kind"] = "mlp";
    h["classes"] = probe.classes;
    h["dims"] = {dims[0], dims[1], dims[2]};
    h["objective"] = "squared_error";
    h["activation"] = "relu";
    h["config"] = config_json(probe.config);
    h["seed"] = probe.config.seed;
    h["trained_on"] = summary_json(probe.trained_on);
    h["centered"] = probe.input_mean.size() > 0;
    h["logs"] = ordered_json::array({log_json(probe.log)});
    h["param_count"] = params.size();
    return emit(out, h, params);
}

std::size_t write_probe(const LinearProbe& probe, const std::string& path) { return write_to_path(probe, path); }
std::size_t write_probe(const MlpProbe& probe, const std::string& path) { return write_to_path(probe, path); }

AnyProbe read_probe(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (in.gcount() != 4 || magic != kMagic) throw Error(ErrorCode::format, "PRBF bad magic");
    const auto version = get_u32(in);
    if (version != kPrbfVersion) throw Error(ErrorCode::format, "PRBF unsupported version " + std::to_string(version));
    const auto header_len = get_u32(in);
    std::string text;
    while (text.size() < header_len) {
        const std::size_t want = std::min<std::size_t>(header_len - text.size(), std::size_t{1} << 16);
        const std::size_t old = text.size();
        text.resize(old + want);
        in.read(text.data() + old, static_cast<std::streamsize>(want));
        if (static_cast<std::size_t>(in.gcount()) != want) throw Error(ErrorCode::format, "PRBF truncated header");
    }

    try {
        const auto h = nlohmann::json::parse(text);
        const auto count = h.at("param_count").get<std::size_t>();
        std::vector<float> values;
        values.reserve(std::min<std::size_t>(count, std::size_t{1} << 20));
        for (std::size_t i = 0; i < count; ++i) values.push_back(std::bit_cast<float>(get_u32(in)));
        if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::format, "PRBF trailing bytes");
        FloatCursor cur(std::move(values));

        const auto dims = h.at("dims").get<std::vector<Index>>();
        const bool centered = h.at("centered").get<bool>();
        const auto kind = h.at("kind").get<std::string>();
        if (kind == "linear") {
            if (dims.size() != 2) throw Error(ErrorCode::format, "PRBF linear probe needs 2 dims");
            LinearProbe p;
            p.classes = h.at("classes").get<std::vector<std::string>>();
            p.weights = cur.take(dims[1], dims[0]);
            p.bias = cur.take(dims[1]);
            if (centered) p.input_mean = cur.take(dims[0]);
            p.objective = parse_probe_objective(h.at("objective").get<std::string>());
            p.mode = parse_probe_mode(h.at("mode").get<std::string>());
            p.config = config_from(h.at("config"));
            p.trained_on = summary_from(h.at("trained_on"));
            for (const auto& l : h.at("logs")) p.logs.push_back(log_from(l));
            if (!cur.exhausted() || static_cast<Index>(p.classes.size()) != dims[1]) {
                throw Error(ErrorCode::format, "PRBF parameter count does not match dims");
            }
            return p;
        }
        if (kind == "mlp") {
            if (dims.size() != 3) throw Error(ErrorCode::format, "PRBF MLP probe needs 3 dims");
            MlpProbe p;
            p.classes = h.at("classes").get<std::vector<std::string>>();
            p.w1 = cur.take(dims[1], dims[0]);
            p.b1 = cur.take(dims[1]);
            p.w2 = cur.take(dims[2], dims[1]);
            p.b2 = cur.take(dims[2]);
            if (centered) p.input_mean = cur.take(dims[0]);
            p.config = config_from(h.at("config"));
            p.trained_on = summary_from(h.at("trained_on"));
            const auto& logs = h.at("logs");
            if (!logs.empty()) p.log = log_from(logs.at(0));
            if (!cur.exhausted() || static_cast<Index>(p.classes.size()) != dims[2]) {
                throw Error(ErrorCode::format, "PRBF parameter count does not match dims");
            }
            return p;
        }
        throw Error(ErrorCode::format, "PRBF unknown probe kind: " + kind);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format, std::string("PRBF bad header: ") + e.what());
    }
}

AnyProbe read_probe(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::io, "cannot open probe file: " + path);
    return read_probe(f);
}

LinearProbe read_linear_probe(const std::string& path) {
    auto p = read_probe(path);
    if (auto* lin = std::get_if<LinearProbe>(&p)) return std::move(*lin);
    throw Error(ErrorCode::format, "expected a linear probe in " + path);
}

}  // namespace spatialprobe
