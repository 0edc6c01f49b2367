#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mdiqa {

/// Score grid and the Gaussian widths used to encode a scalar quality score.
///
/// A score s in [0, max_score] is placed at grid position
/// u = s / max_score * (grid_size - 1) and rendered as an unnormalized
/// Gaussian of width sigma_k = grid_size * scales[k].
struct CodecConfig {
    double max_score = 4.0;
    std::size_t grid_size = 101;
    std::vector<double> scales{0.01, 0.02, 0.04};

    std::size_t num_scales() const { return scales.size(); }
    double sigma(std::size_t k) const;
    /// Distance in score units between two adjacent grid cells.
    double step() const { return max_score / static_cast<double>(grid_size - 1); }

    /// Throws DomainError if any invariant is violated.
    void validate() const;

    bool operator==(const CodecConfig&) const = default;
};

struct DistributionVector {
    std::vector<double> values;
    std::size_t scale_index = 0;
};

DistributionVector encode_score(double score, const CodecConfig& cfg, std::size_t scale_index);

/// All K encodings of one score, in scale order.
std::vector<DistributionVector> encode_multiscale(double score, const CodecConfig& cfg);

/// Argmax decode; ties go to the lowest index.
double decode_distribution(std::span<const double> values, const CodecConfig& cfg);
double decode_distribution(const DistributionVector& v, const CodecConfig& cfg);

/// Mean of the per-scale argmax decodes.
double decode_multiscale(std::span<const DistributionVector> vs, const CodecConfig& cfg);

/// (v[j] + eps) / sum_i (v[i] + eps)
std::vector<double> normalize_to_probability(std::span<const double> values, double eps = 1e-8);

} // namespace mdiqa
