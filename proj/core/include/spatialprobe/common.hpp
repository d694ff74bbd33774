#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace spatialprobe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode {
    invalid_argument,
    io,
    format,
    numeric,
    not_found,
};

// Every recoverable failure in the library surfaces as this exception; the
// code lets the CLI map failures onto stages without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

enum class Split { train, test };
enum class Dimensionality { two_d, three_d };

std::string_view to_string(Split s);
std::string_view to_string(Dimensionality d);
Split parse_split(std::string_view s);
Dimensionality parse_dimensionality(std::string_view s);

// Deterministic 64-bit hashing and seed derivation. std::hash is not stable
// across standard libraries, so anything that feeds an RNG goes through these.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view name);

std::string hex64(std::uint64_t x);
/// "config_hash=<16 hex> seed=<n>", the stamp written into every artifact.
std::string provenance_tag(std::string_view canonical_config, std::uint64_t seed);

}  // namespace spatialprobe
