#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "spatialprobe/common.hpp"

namespace spatialprobe {

enum class TokenStrategy { final_token_before_period, entity_span_mean };

std::string_view to_string(TokenStrategy t);
TokenStrategy parse_token_strategy(std::string_view s);

inline constexpr std::string_view kDefaultHookPoint = "resid_pre_final_ln";

struct CaptureMeta {
    std::string model_id;
    std::int64_t layer = 0;
    std::string hook_point = std::string(kDefaultHookPoint);
    TokenStrategy token_strategy = TokenStrategy::final_token_before_period;
    std::int64_t d_model = 1;
    double mean_row_norm = 0.0;
    std::uint64_t capture_seed = 0;

    bool operator==(const CaptureMeta&) const = default;
};

struct RowLabel {
    std::int64_t prompt_id = 0;
    std::string relation;
    std::string obj1;
    std::string obj2;
    Split split = Split::train;

    bool operator==(const RowLabel&) const = default;
};

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n x d float32 activations with per-row labels. Immutable once built; the
/// constructor enforces shape, finiteness and label validity.
class ActivationSet {
public:
    ActivationSet(FloatMatrix data, CaptureMeta meta, std::vector<RowLabel> labels);

    std::size_t rows() const { return static_cast<std::size_t>(data_.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(data_.cols()); }
    const FloatMatrix& data() const { return data_; }
    const CaptureMeta& meta() const { return meta_; }
    const std::vector<RowLabel>& labels() const { return labels_; }

    Vector row(std::size_t i) const { return data_.row(static_cast<Eigen::Index>(i)).cast<double>().transpose(); }
    Matrix to_double() const { return data_.cast<double>(); }

private:
    FloatMatrix data_;
    CaptureMeta meta_;
    std::vector<RowLabel> labels_;
};

/// Mean L2 norm of the rows, accumulated in double. Zero for an empty matrix.
double mean_row_norm(const FloatMatrix& data);

inline constexpr std::uint32_t kActfVersion = 1;

/// ACTF v1, little-endian: "ACTF", u32 version, u32 H, H bytes of JSON
/// header, n*d float32 row-major, u32 L, L bytes of JSON-lines labels.
std::size_t write_actf(const ActivationSet& set, std::ostream& out);
std::size_t write_actf(const ActivationSet& set, const std::string& path);
ActivationSet read_actf(std::istream& in);
ActivationSet read_actf(const std::string& path);

using RowPredicate = std::function<bool(const RowLabel&)>;

ActivationSet select(const ActivationSet& set, const RowPredicate& pred);

/// Per-relation arithmetic means (double accumulation). Keys are relation ids.
std::map<std::string, Vector> class_means(const ActivationSet& set);

/// As above, but every relation in `required` must have at least one row.
std::map<std::string, Vector> class_means(const ActivationSet& set, const std::vector<std::string>& required);

}  // namespace spatialprobe
