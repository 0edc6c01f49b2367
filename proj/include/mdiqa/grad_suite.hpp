#pragma once

#include "mdiqa/grad_check.hpp"
#include "mdiqa/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mdiqa {

struct GradSuiteEntry {
    std::string name;
    std::size_t instances = 0;
    double tol = 0.0;
    GradCheckReport worst; ///< instance with the largest relative error
    bool passed = true;
};

struct GradSuiteOptions {
    std::size_t instances = 10;
    std::uint64_t seed = 0;
    double op_tol = 1e-4;
    double model_tol = 1e-3;
    double op_step_scale = 1e-4;
    /// Smaller step for the model: a wider one straddles leaky-ReLU kinks
    /// somewhere among thousands of activations.
    double model_step_scale = 1e-6;
    ModelConfig model;
    /// Coordinate sample per parameter tensor for the model check (0 = all).
    std::size_t model_coords_per_tensor = 0;
};

/// Finite-difference checks of every differentiable op, the losses and the
/// full model, each on `instances` random inputs.
std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options);

} // namespace mdiqa
