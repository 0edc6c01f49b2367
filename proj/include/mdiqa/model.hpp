#pragma once

#include "mdiqa/codec.hpp"
#include "mdiqa/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mdiqa {

/// Architecture of the dual-branch quality network.
///
/// Trunk: `depth` blocks of (3x3 conv, stride 2, pad 1, leaky ReLU); block i
/// has base_channels * 2^i outputs. The local branch is the trunk output; the
/// global branch is its spatial mean broadcast back over the map. Both are
/// concatenated and fused by a 1x1 conv (+ leaky ReLU) into `fused_channels`
/// features f. Each codec scale owns one (scoring, weighting) pair of 1x1 convs
/// mapping f to grid_size channels.
struct ModelConfig {
    std::size_t input_size = 64;
    std::size_t base_channels = 8;
    std::size_t depth = 3;
    std::size_t fused_channels = 32;
    double leaky_slope = 0.1;
    CodecConfig codec;

    std::size_t trunk_channels(std::size_t block) const { return base_channels << block; }
    std::size_t feature_size() const { return input_size >> depth; }
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

class QualityModel {
public:
    /// Zero-initialised parameters; see init_model for a trained-from-scratch start.
    explicit QualityModel(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }

    std::vector<NamedTensor>& parameters() { return params_; }
    const std::vector<NamedTensor>& parameters() const { return params_; }
    std::vector<Tensor> parameter_tensors() const;
    std::size_t parameter_count() const;

    /// images [B,1,H,W] in [0,1] -> K tensors [B,N], one per codec scale.
    std::vector<Tensor> forward(const Tensor& images) const;

    /// Fused feature map f [B,C,h,w] (exposed for tests of the head).
    Tensor features(const Tensor& images) const;

    /// Weighted patch pooling for scale k applied to an explicit feature map.
    Tensor head(const Tensor& features, std::size_t k) const;

    /// Deep copy of every parameter; the copy owns independent storage.
    QualityModel clone(bool requires_grad) const;

    void zero_grad();

    const Tensor& param(const std::string& name) const;
    Tensor& param(const std::string& name);

private:
    ModelConfig cfg_;
    std::vector<NamedTensor> params_;
    // Parameter indices.
    std::vector<std::size_t> trunk_w_, trunk_b_;
    std::size_t fuse_w_ = 0, fuse_b_ = 0;
    std::vector<std::size_t> score_w_, score_b_, weight_w_, weight_b_;
};

/// Glorot-uniform weights, zero biases. Deterministic in `seed`.
QualityModel init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Decoded, clamped score of a single image [1,1,H,W].
double predict_score(const QualityModel& model, const Tensor& image, const CodecConfig& cfg);

/// Decoded, clamped scores of a batch [B,1,H,W].
std::vector<double> predict_scores(const QualityModel& model, const Tensor& images, const CodecConfig& cfg);

/// Decoded, clamped scores from already computed head outputs (K tensors [B,N]).
std::vector<double> decode_outputs(const std::vector<Tensor>& outputs, const CodecConfig& cfg);

/// ema <- alpha * ema + (1 - alpha) * params, elementwise.
void ema_update(std::vector<Tensor>& ema, const std::vector<Tensor>& params, double alpha);

} // namespace mdiqa
