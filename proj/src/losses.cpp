#include "mdiqa/losses.hpp"

#include "mdiqa/errors.hpp"
#include "mdiqa/ops.hpp"

#include <algorithm>
#include <cmath>

namespace mdiqa {

double lambda3_at(double t, double warmup_iterations, double warmup_target) {
    if (!(t >= 0.0))
        throw DomainError("lambda3: iteration must be non-negative");
    if (!(warmup_iterations > 0.0) || !(warmup_target > 0.0 && warmup_target < 1.0))
        throw DomainError("lambda3: invalid warmup parameters");
    // target * (1 - r^x) / (1 - r) with r = 1 - target equals 1 - r^x, and
    // evaluates to `target` bit-exactly at x = 1.
    const double log_r = std::log1p(-warmup_target);
    const double x = t / warmup_iterations;
    const double value = warmup_target * (std::expm1(x * log_r) / std::expm1(log_r));
    return std::min(value, std::nextafter(1.0, 0.0));
}

double LossWeights::lambda3(std::uint64_t t) const {
    if (!consistency_enabled)
        return 0.0;
    return lambda3_at(static_cast<double>(t), warmup_iterations, warmup_target);
}

void LossWeights::validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(beta >= 0.0))
        throw ConfigError("loss weights must be non-negative");
    if (!(warmup_iterations > 0.0))
        throw ConfigError("warmup_iterations must be positive");
    if (!(warmup_target > 0.0 && warmup_target < 1.0))
        throw ConfigError("warmup_target must lie in (0, 1)");
}

ScaleTensors make_targets(std::span<const double> scores, const CodecConfig& cfg) {
    const auto batch = scores.size();
    const auto grid = cfg.grid_size;
    ScaleTensors out;
    out.reserve(cfg.num_scales());
    for (std::size_t k = 0; k < cfg.num_scales(); ++k) {
        std::vector<double> values(batch * grid);
        for (std::size_t b = 0; b < batch; ++b) {
            const auto v = encode_score(scores[b], cfg, k);
            std::ranges::copy(v.values, values.begin() + static_cast<std::ptrdiff_t>(b * grid));
        }
        out.push_back(Tensor::from({batch, grid}, std::move(values)));
    }
    return out;
}

namespace {

void check_pairing(const ScaleTensors& pred, const ScaleTensors& target, const char* name) {
    if (pred.empty() || pred.size() != target.size())
        throw ShapeError(std::string(name) + ": scale count mismatch (" + std::to_string(pred.size()) + " vs " +
                         std::to_string(target.size()) + ")");
    for (std::size_t k = 0; k < pred.size(); ++k)
        if (pred[k].shape() != target[k].shape() || pred[k].rank() != 2)
            throw ShapeError(std::string(name) + ": scale " + std::to_string(k) + " shapes " +
                             shape_str(pred[k].shape()) + " vs " + shape_str(target[k].shape()));
}

Tensor mean_over_scales(std::vector<Tensor> terms) {
    Tensor acc = terms.front();
    for (std::size_t k = 1; k < terms.size(); ++k)
        acc = ops::add(acc, terms[k]);
    return ops::mul_scalar(acc, 1.0 / static_cast<double>(terms.size()));
}

// Smooth positive map applied to both KL arguments: identity plus an offset
// on [0, inf), an exponential tail below zero. Its slope never vanishes, so
// negative predictions still receive gradient.
double positive_part(double v) { return v >= 0.0 ? v + kKlOffset : kKlOffset * std::exp(v / kKlOffset); }
double positive_slope(double v) { return v >= 0.0 ? 1.0 : std::exp(v / kKlOffset); }

// Row-wise KL between normalised positive_part(pred) and positive_part(target),
// averaged over rows. Gradient flows into `pred` only.
Tensor row_kl(const Tensor& pred, const Tensor& target, double eps, KlDirection direction) {
    const auto rows = pred.dim(0), width = pred.dim(1);
    const auto pv = pred.values();
    const auto tv = target.values();
    std::vector<double> p(rows * width), q(rows * width), row_sum(rows);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double sp = 0.0, sq = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            sp += positive_part(pv[r * width + j]) + eps;
            sq += positive_part(tv[r * width + j]) + eps;
        }
        row_sum[r] = sp;
        double kl = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            const auto i = r * width + j;
            p[i] = (positive_part(pv[i]) + eps) / sp;
            q[i] = (positive_part(tv[i]) + eps) / sq;
            kl += direction == KlDirection::TargetToPrediction ? q[i] * std::log(q[i] / p[i])
                                                               : p[i] * std::log(p[i] / q[i]);
        }
        total += kl;
    }
    const double inv_rows = 1.0 / static_cast<double>(rows);
    return Tensor::make_result(
        {}, {total * inv_rows}, {pred}, "kl_divergence",
        [pred, p = std::move(p), q = std::move(q), row_sum = std::move(row_sum), rows, width, inv_rows,
         direction](std::span<const double> g) {
            const auto pv = pred.values();
            auto dp = pred.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const double s = row_sum[r];
                double mean_term = 0.0;
                if (direction == KlDirection::PredictionToTarget)
                    for (std::size_t j = 0; j < width; ++j) {
                        const auto i = r * width + j;
                        mean_term += p[i] * (std::log(p[i] / q[i]) + 1.0);
                    }
                for (std::size_t j = 0; j < width; ++j) {
                    const auto i = r * width + j;
                    // d/d(positive_part(pred_j)) of the row divergence.
                    const double d = direction == KlDirection::TargetToPrediction
                                         ? 1.0 / s - q[i] / (p[i] * s)
                                         : ((std::log(p[i] / q[i]) + 1.0) - mean_term) / s;
                    dp[i] += g[0] * inv_rows * d * positive_slope(pv[i]);
                }
            }
        });
}

} // namespace

Tensor l2_distribution_loss(const ScaleTensors& pred, const ScaleTensors& target) {
    check_pairing(pred, target, "l2_distribution_loss");
    std::vector<Tensor> terms;
    terms.reserve(pred.size());
    for (std::size_t k = 0; k < pred.size(); ++k)
        terms.push_back(ops::mean(ops::square(ops::sub(pred[k], target[k]))));
    return mean_over_scales(std::move(terms));
}

Tensor kl_distribution_loss(const ScaleTensors& pred, const ScaleTensors& target, double eps,
                            KlDirection direction) {
    check_pairing(pred, target, "kl_distribution_loss");
    if (!(eps > 0.0))
        throw DomainError("kl_distribution_loss: eps must be positive");
    std::vector<Tensor> terms;
    terms.reserve(pred.size());
    for (std::size_t k = 0; k < pred.size(); ++k)
        terms.push_back(row_kl(pred[k], target[k], eps, direction));
    return mean_over_scales(std::move(terms));
}

Tensor supervised_loss(const ScaleTensors& pred, const ScaleTensors& target, double beta, double eps,
                       KlDirection direction) {
    const Tensor l2 = l2_distribution_loss(pred, target);
    if (beta == 0.0)
        return l2;
    return ops::add(l2, ops::mul_scalar(kl_distribution_loss(pred, target, eps, direction), beta));
}

Tensor pseudo_loss(const ScaleTensors& pred, const ScaleTensors& pseudo_target, double beta, double eps,
                   KlDirection direction) {
    return supervised_loss(pred, pseudo_target, beta, eps, direction);
}

Tensor consistency_loss(const ScaleTensors& student, const ScaleTensors& teacher) {
    ScaleTensors detached;
    detached.reserve(teacher.size());
    for (const auto& t : teacher)
        detached.push_back(t.requires_grad() ? t.detach() : t);
    return l2_distribution_loss(student, detached);
}

Tensor total_loss(const Tensor& sup, const Tensor& pseudo, const Tensor& cons, const LossWeights& weights,
                  std::uint64_t t) {
    const double lambda3 = weights.lambda3(t);
    Tensor acc = weights.lambda1 == 1.0 ? sup : ops::mul_scalar(sup, weights.lambda1);
    if (weights.lambda2 != 0.0)
        acc = ops::add(acc, ops::mul_scalar(pseudo, weights.lambda2));
    if (lambda3 != 0.0)
        acc = ops::add(acc, ops::mul_scalar(cons, lambda3));
    return acc;
}

} // namespace mdiqa
