#include "mdiqa/optim.hpp"

#include "mdiqa/errors.hpp"

#include <cmath>

namespace mdiqa {

void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
               const AdamOptions& options, std::uint64_t step) {
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
        throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
    if (step < 1)
        throw DomainError("adam_step: step must be at least 1");
    const double b1 = options.beta1, b2 = options.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        params[i] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.eps);
    }
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step() {
    ++steps_;
    for (std::size_t i = 0; i < params_.size(); ++i)
        adam_step(params_[i].mutable_values(), params_[i].grad(), m_[i], v_[i], options_, steps_);
}

void Adam::zero_grad() {
    for (auto& p : params_)
        p.zero_grad();
}

void Adam::load_state(std::vector<std::vector<double>> m, std::vector<std::vector<double>> v, std::uint64_t steps) {
    if (m.size() != params_.size() || v.size() != params_.size())
        throw ShapeError("adam: moment count does not match parameter count");
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (m[i].size() != params_[i].numel() || v[i].size() != params_[i].numel())
            throw ShapeError("adam: moment shape mismatch at tensor " + std::to_string(i));
    m_ = std::move(m);
    v_ = std::move(v);
    steps_ = steps;
}

} // namespace mdiqa
