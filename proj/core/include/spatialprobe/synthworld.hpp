#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spatialprobe/actstore.hpp"
#include "spatialprobe/corpus.hpp"
#include "spatialprobe/geometry.hpp"

namespace spatialprobe {

struct SynthConfig {
    std::int64_t d_model = 64;
    double noise_sigma = 0.0;
    std::int64_t n_distractors = 0;
    double distractor_scale = 5.0;
    double signal_scale = 10.0;
    std::uint64_t seed = 0;
    // When false, each composed relation also carries its own fixed offset
    // orthogonal to the spatial basis, so composition holds only approximately.
    bool compositional = true;

    void validate() const;
};

/// Which representation a synthetic row stands for. The sentence row and the
/// object-1 row encode p1 - p2; the object-2 row encodes p2 - p1.
enum class ObjectSlot { sentence, object1, object2 };

std::string_view to_string(ObjectSlot s);
ObjectSlot parse_object_slot(std::string_view s);

/// Seeded Haar-random orthonormal frame: rows 0..2 are the planted spatial
/// basis (x right, y above, z in front), the next n_distractors rows carry
/// object identity, and one further row is reserved for non-compositional
/// offsets.
class SynthWorld {
public:
    explicit SynthWorld(const SynthConfig& cfg);

    const SynthConfig& config() const { return cfg_; }
    const Matrix& basis() const { return basis_; }
    const Matrix& distractors() const { return distractors_; }

    Vector activation(const PromptRecord& record, ObjectSlot slot = ObjectSlot::sentence) const;
    /// Noise-free, distractor-free signal for a grid offset.
    Vector planted_direction(const GridOffset& offset) const;

private:
    SynthConfig cfg_;
    Matrix basis_;        // 3 x d
    Matrix distractors_;  // n_distractors x d
    Vector composition_axis_;
};

/// 3 x d orthonormal basis.
Matrix plant_basis(const SynthConfig& cfg);

Vector synth_activation(const PromptRecord& record, const SynthWorld& world, ObjectSlot slot = ObjectSlot::sentence);

/// One row per record, model_id "synthworld".
ActivationSet synth_dataset(std::span<const PromptRecord> corpus, const SynthWorld& world,
                            ObjectSlot slot = ObjectSlot::sentence, std::int64_t layer = 0);

/// Principal angles (degrees, ascending) between the row spans of a and b.
std::vector<double> principal_angles_deg(const Matrix& a_rows, const Matrix& b_rows);

/// Largest principal angle between span(recovered.components) and span(basis).
double subspace_recovery_error(const Subspace& recovered, const Matrix& basis);

}  // namespace spatialprobe
