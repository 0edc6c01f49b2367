#include "mdiqa/codec.hpp"

#include "mdiqa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mdiqa {

double CodecConfig::sigma(std::size_t k) const {
    if (k >= scales.size())
        throw DomainError("scale index " + std::to_string(k) + " out of range (K=" +
                          std::to_string(scales.size()) + ")");
    return static_cast<double>(grid_size) * scales[k];
}

void CodecConfig::validate() const {
    if (!(max_score > 0.0) || !std::isfinite(max_score))
        throw DomainError("codec: max_score must be positive");
    if (grid_size < 2)
        throw DomainError("codec: grid_size must be at least 2");
    if (scales.empty())
        throw DomainError("codec: at least one scale is required");
    for (std::size_t k = 0; k < scales.size(); ++k) {
        if (!(scales[k] > 0.0) || !std::isfinite(scales[k]))
            throw DomainError("codec: scales must be positive");
        if (k > 0 && !(scales[k] > scales[k - 1]))
            throw DomainError("codec: scales must be strictly increasing");
    }
}

DistributionVector encode_score(double score, const CodecConfig& cfg, std::size_t scale_index) {
    if (!(score >= 0.0 && score <= cfg.max_score))
        throw DomainError("encode_score: score " + std::to_string(score) + " outside [0, " +
                          std::to_string(cfg.max_score) + "]");
    const double sigma = cfg.sigma(scale_index);
    const double center = score / cfg.max_score * static_cast<double>(cfg.grid_size - 1);
    const double denom = 2.0 * sigma * sigma;

    DistributionVector out;
    out.scale_index = scale_index;
    out.values.resize(cfg.grid_size);
    for (std::size_t j = 0; j < cfg.grid_size; ++j) {
        const double d = static_cast<double>(j) - center;
        out.values[j] = std::exp(-d * d / denom);
    }
    return out;
}

std::vector<DistributionVector> encode_multiscale(double score, const CodecConfig& cfg) {
    std::vector<DistributionVector> out;
    out.reserve(cfg.num_scales());
    for (std::size_t k = 0; k < cfg.num_scales(); ++k)
        out.push_back(encode_score(score, cfg, k));
    return out;
}

double decode_distribution(std::span<const double> values, const CodecConfig& cfg) {
    if (values.empty())
        throw DomainError("decode_distribution: empty vector");
    // max_element returns the first maximum, which is the tie rule we want.
    const auto idx = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
    const auto denom = static_cast<double>(values.size() - 1);
    if (values.size() == 1)
        return 0.0;
    return static_cast<double>(idx) * cfg.max_score / denom;
}

double decode_distribution(const DistributionVector& v, const CodecConfig& cfg) {
    return decode_distribution(std::span<const double>(v.values), cfg);
}

double decode_multiscale(std::span<const DistributionVector> vs, const CodecConfig& cfg) {
    if (vs.size() != cfg.num_scales())
        throw DomainError("decode_multiscale: expected " + std::to_string(cfg.num_scales()) +
                          " vectors, got " + std::to_string(vs.size()));
    double total = 0.0;
    for (const auto& v : vs) {
        if (v.values.size() != cfg.grid_size)
            throw DomainError("decode_multiscale: vector length " + std::to_string(v.values.size()) +
                              " does not match grid size " + std::to_string(cfg.grid_size));
        total += decode_distribution(v, cfg);
    }
    return total / static_cast<double>(vs.size());
}

std::vector<double> normalize_to_probability(std::span<const double> values, double eps) {
    if (!(eps > 0.0))
        throw DomainError("normalize_to_probability: eps must be positive");
    if (values.empty())
        throw DomainError("normalize_to_probability: empty vector");
    double total = 0.0;
    for (double v : values)
        total += v + eps;
    std::vector<double> out(values.size());
    for (std::size_t j = 0; j < values.size(); ++j)
        out[j] = (values[j] + eps) / total;
    return out;
}

} // namespace mdiqa
