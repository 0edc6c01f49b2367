#pragma once

#include "mdiqa/codec.hpp"
#include "mdiqa/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mdiqa {

/// Multi-scale head output or target: K tensors of shape [B,N].
using ScaleTensors = std::vector<Tensor>;

enum class KlDirection {
    TargetToPrediction, ///< KL(target || prediction), the default
    PredictionToTarget,
};

/// Consistency weight ramp: lambda3(t) = 1 - (1 - target)^(t / T0).
/// Reaches `target` at t = T0 and tends to 1.
double lambda3_at(double t, double warmup_iterations = 400.0, double warmup_target = 0.1);

struct LossWeights {
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double beta = 0.1;
    double warmup_iterations = 400.0;
    double warmup_target = 0.1;
    /// false pins lambda3 to zero for every t.
    bool consistency_enabled = true;

    double lambda3(std::uint64_t t) const;
    void validate() const;
};

/// Encodes a batch of scores into per-scale target tensors (no gradient).
ScaleTensors make_targets(std::span<const double> scores, const CodecConfig& cfg);

/// Mean of squared differences over scales, batch and grid.
Tensor l2_distribution_loss(const ScaleTensors& pred, const ScaleTensors& target);

/// Offset of the positive map both KL arguments pass through before
/// eps-normalisation: v + c for v >= 0, c * exp(v / c) below.
inline constexpr double kKlOffset = 1.0;

/// Row-wise KL divergence after the positive map and eps-normalisation,
/// averaged over scales and batch. The target is treated as a constant.
Tensor kl_distribution_loss(const ScaleTensors& pred, const ScaleTensors& target, double eps = 1e-8,
                            KlDirection direction = KlDirection::TargetToPrediction);

/// L2 + beta * KL against ground-truth encodings.
Tensor supervised_loss(const ScaleTensors& pred, const ScaleTensors& target, double beta, double eps = 1e-8,
                       KlDirection direction = KlDirection::TargetToPrediction);
/// Same functional form as supervised_loss, against pseudo-label encodings.
Tensor pseudo_loss(const ScaleTensors& pred, const ScaleTensors& pseudo_target, double beta, double eps = 1e-8,
                   KlDirection direction = KlDirection::TargetToPrediction);

/// L2 between student outputs and (detached) teacher outputs.
Tensor consistency_loss(const ScaleTensors& student, const ScaleTensors& teacher);

/// lambda1 * sup + lambda2 * pseudo + lambda3(t) * cons. Terms whose weight is
/// exactly zero are left out of the graph, so `pseudo` / `cons` may be
/// undefined tensors in that case.
Tensor total_loss(const Tensor& sup, const Tensor& pseudo, const Tensor& cons, const LossWeights& weights,
                  std::uint64_t t);

} // namespace mdiqa
