#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <variant>

#include "spatialprobe/probekit.hpp"

namespace spatialprobe {

inline constexpr std::uint32_t kPrbfVersion = 1;

// PRBF v1, little-endian: "PRBF", u32 version, u32 H, H bytes of JSON header
// (kind, classes, dims, objective, config, seed, trained_on, param_count),
// then param_count float32 values. Linear: W row-major, b, input mean.
// MLP: W1, b1, W2, b2, input mean. Parameters are stored as float32, so a
// reloaded probe matches the trained one to single precision.
std::size_t write_probe(const LinearProbe& probe, std::ostream& out);
std::size_t write_probe(const MlpProbe& probe, std::ostream& out);
std::size_t write_probe(const LinearProbe& probe, const std::string& path);
std::size_t write_probe(const MlpProbe& probe, const std::string& path);

using AnyProbe = std::variant<LinearProbe, MlpProbe>;

AnyProbe read_probe(std::istream& in);
AnyProbe read_probe(const std::string& path);
LinearProbe read_linear_probe(const std::string& path);

}  // namespace spatialprobe
