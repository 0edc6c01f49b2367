#pragma once

#include "mdiqa/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mdiqa {

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update of a flat parameter block; `step` counts from 1.
void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
               const AdamOptions& options, std::uint64_t step);

/// Adam over a list of parameter tensors, reading their accumulated gradients.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamOptions options);

    /// Applies one update and advances the step counter.
    void step();
    void zero_grad();

    std::uint64_t steps() const { return steps_; }
    const AdamOptions& options() const { return options_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }

    /// Restores moments and the step count (e.g. from a checkpoint).
    void load_state(std::vector<std::vector<double>> m, std::vector<std::vector<double>> v, std::uint64_t steps);

private:
    std::vector<Tensor> params_;
    AdamOptions options_;
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t steps_ = 0;
};

} // namespace mdiqa
