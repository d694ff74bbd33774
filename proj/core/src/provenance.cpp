#include "spatialprobe/common.hpp"

#include <cstdio>
#include <string>

namespace spatialprobe {

std::string_view to_string(Split s) {
    return s == Split::train ? "train" : "test";
}

std::string_view to_string(Dimensionality d) {
    return d == Dimensionality::two_d ? "2D" : "3D";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw Error(ErrorCode::invalid_argument, "unknown split: " + std::string(s));
}

Dimensionality parse_dimensionality(std::string_view s) {
    if (s == "2D" || s == "2d") return Dimensionality::two_d;
    if (s == "3D" || s == "3d") return Dimensionality::three_d;
    throw Error(ErrorCode::invalid_argument, "unknown dimensionality: " + std::string(s));
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view name) {
    return splitmix64(global_seed ^ fnv1a64(name));
}

std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

std::string provenance_tag(std::string_view canonical_config, std::uint64_t seed) {
    return "config_hash=" + hex64(fnv1a64(canonical_config)) + " seed=" + std::to_string(seed);
}

}  // namespace spatialprobe
