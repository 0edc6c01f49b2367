#include "mdiqa/model.hpp"

#include "mdiqa/errors.hpp"
#include "mdiqa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mdiqa {

void ModelConfig::validate() const {
    codec.validate();
    if (depth == 0)
        throw ConfigError("model: depth must be at least 1");
    if (base_channels == 0 || fused_channels == 0)
        throw ConfigError("model: channel counts must be positive");
    if (input_size == 0 || input_size % (std::size_t{1} << depth) != 0)
        throw ConfigError("model: input_size " + std::to_string(input_size) + " must be divisible by 2^depth (" +
                          std::to_string(std::size_t{1} << depth) + ")");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
        throw ConfigError("model: leaky_slope must lie in [0, 1)");
}

QualityModel::QualityModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    auto add = [this](std::string name, Shape shape) {
        params_.push_back({std::move(name), Tensor::zeros(std::move(shape), true)});
        return params_.size() - 1;
    };
    std::size_t in = 1;
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
        const auto out = cfg_.trunk_channels(i);
        trunk_w_.push_back(add("trunk." + std::to_string(i) + ".weight", {out, in, 3, 3}));
        trunk_b_.push_back(add("trunk." + std::to_string(i) + ".bias", {out}));
        in = out;
    }
    fuse_w_ = add("fuse.weight", {cfg_.fused_channels, 2 * in, 1, 1});
    fuse_b_ = add("fuse.bias", {cfg_.fused_channels});
    const auto grid = cfg_.codec.grid_size;
    for (std::size_t k = 0; k < cfg_.codec.num_scales(); ++k) {
        score_w_.push_back(add("score." + std::to_string(k) + ".weight", {grid, cfg_.fused_channels, 1, 1}));
        score_b_.push_back(add("score." + std::to_string(k) + ".bias", {grid}));
        weight_w_.push_back(add("weighting." + std::to_string(k) + ".weight", {grid, cfg_.fused_channels, 1, 1}));
        weight_b_.push_back(add("weighting." + std::to_string(k) + ".bias", {grid}));
    }
}

std::vector<Tensor> QualityModel::parameter_tensors() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_)
        out.push_back(p.tensor);
    return out;
}

std::size_t QualityModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
        n += p.tensor.numel();
    return n;
}

Tensor QualityModel::features(const Tensor& images) const {
    if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != cfg_.input_size ||
        images.dim(3) != cfg_.input_size)
        throw ShapeError("forward: expected images [B,1," + std::to_string(cfg_.input_size) + "," +
                         std::to_string(cfg_.input_size) + "], got " + shape_str(images.shape()));
    Tensor h = images;
    for (std::size_t i = 0; i < cfg_.depth; ++i)
        h = ops::leaky_relu(ops::conv2d(h, params_[trunk_w_[i]].tensor, params_[trunk_b_[i]].tensor, 2, 1),
                            cfg_.leaky_slope);
    const auto side = cfg_.feature_size();
    const Tensor global = ops::broadcast_spatial(ops::global_avg_pool(h), side, side);
    const Tensor fused = ops::conv2d(ops::concat_channels(h, global), params_[fuse_w_].tensor,
                                     params_[fuse_b_].tensor);
    return ops::leaky_relu(fused, cfg_.leaky_slope);
}

Tensor QualityModel::head(const Tensor& features, std::size_t k) const {
    if (k >= cfg_.codec.num_scales())
        throw DomainError("head: scale index out of range");
    const Tensor patch_scores = ops::conv2d(features, params_[score_w_[k]].tensor, params_[score_b_[k]].tensor);
    const Tensor weights =
        ops::sigmoid(ops::conv2d(features, params_[weight_w_[k]].tensor, params_[weight_b_[k]].tensor));
    const Tensor numerator = ops::sum_over(ops::mul(weights, patch_scores), {2, 3});
    const Tensor denominator = ops::sum_over(weights, {2, 3});
    return ops::div(numerator, denominator);
}

std::vector<Tensor> QualityModel::forward(const Tensor& images) const {
    const Tensor f = features(images);
    std::vector<Tensor> out;
    out.reserve(cfg_.codec.num_scales());
    for (std::size_t k = 0; k < cfg_.codec.num_scales(); ++k)
        out.push_back(head(f, k));
    return out;
}

QualityModel QualityModel::clone(bool requires_grad) const {
    QualityModel copy(cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i)
        copy.params_[i].tensor = params_[i].tensor.clone(requires_grad);
    return copy;
}

void QualityModel::zero_grad() {
    for (auto& p : params_)
        p.tensor.zero_grad();
}

const Tensor& QualityModel::param(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name)
            return p.tensor;
    throw ConfigError("model: no parameter named '" + name + "'");
}

Tensor& QualityModel::param(const std::string& name) {
    return const_cast<Tensor&>(static_cast<const QualityModel&>(*this).param(name));
}

QualityModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
    QualityModel model(cfg);
    std::mt19937_64 rng(seed);
    for (auto& p : model.parameters()) {
        if (p.tensor.rank() != 4)
            continue; // biases stay zero
        const auto& s = p.tensor.shape();
        const auto receptive = s[2] * s[3];
        const auto fan_in = static_cast<double>(s[1] * receptive);
        const auto fan_out = static_cast<double>(s[0] * receptive);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& v : p.tensor.mutable_values())
            v = dist(rng);
    }
    return model;
}

std::vector<double> decode_outputs(const std::vector<Tensor>& outputs, const CodecConfig& cfg) {
    if (outputs.size() != cfg.num_scales())
        throw DomainError("decode: expected " + std::to_string(cfg.num_scales()) + " head outputs");
    const auto batch = outputs.front().dim(0);
    std::vector<double> scores(batch);
    std::vector<DistributionVector> per_scale(cfg.num_scales());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < cfg.num_scales(); ++k) {
            const auto& out = outputs[k];
            if (out.rank() != 2 || out.dim(0) != batch)
                throw ShapeError("decode: head output " + std::to_string(k) + " has shape " + shape_str(out.shape()));
            const auto width = out.dim(1);
            const auto row = out.values().subspan(b * width, width);
            per_scale[k].values.assign(row.begin(), row.end());
            per_scale[k].scale_index = k;
        }
        scores[b] = std::clamp(decode_multiscale(per_scale, cfg), 0.0, cfg.max_score);
    }
    return scores;
}

std::vector<double> predict_scores(const QualityModel& model, const Tensor& images, const CodecConfig& cfg) {
    NoGradGuard guard;
    return decode_outputs(model.forward(images), cfg);
}

double predict_score(const QualityModel& model, const Tensor& image, const CodecConfig& cfg) {
    if (image.rank() != 4 || image.dim(0) != 1)
        throw ShapeError("predict_score: expected a single image [1,1,H,W], got " + shape_str(image.shape()));
    return predict_scores(model, image, cfg).front();
}

void ema_update(std::vector<Tensor>& ema, const std::vector<Tensor>& params, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw DomainError("ema_update: alpha must lie in [0, 1]");
    if (ema.size() != params.size())
        throw ShapeError("ema_update: parameter count mismatch");
    for (std::size_t i = 0; i < ema.size(); ++i)
        if (ema[i].shape() != params[i].shape())
            throw ShapeError("ema_update: shape mismatch at tensor " + std::to_string(i) + ": " +
                             shape_str(ema[i].shape()) + " vs " + shape_str(params[i].shape()));
    if (alpha == 1.0)
        return;
    const double keep = alpha;
    const double mix = 1.0 - alpha;
    for (std::size_t i = 0; i < ema.size(); ++i) {
        if (alpha == 0.0) {
            std::ranges::copy(params[i].values(), ema[i].mutable_values().begin());
            continue;
        }
        auto dst = ema[i].mutable_values();
        const auto src = params[i].values();
        for (std::size_t j = 0; j < dst.size(); ++j)
            dst[j] = keep * dst[j] + mix * src[j];
    }
}

} // namespace mdiqa
