#pragma once

#include "mdiqa/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>

namespace mdiqa {

struct GradCheckOptions {
    double tol = 1e-4;
    /// Step is step_scale * max(1, |x_i|).
    double step_scale = 1e-4;
    /// Denominator floor of the relative error, so gradients that are zero on
    /// both sides are not judged on roundoff alone.
    double abs_floor = 1e-6;
    /// A failing coordinate is re-measured with the step divided by 10 up to
    /// this many times and keeps its best error. A kink inside [x-h, x+h]
    /// spoils one step but not a smaller one; a wrong gradient fails them all.
    std::size_t refinements = 1;
    /// 0 checks every coordinate; otherwise a seeded sample of this many per tensor.
    std::size_t max_coords_per_tensor = 0;
    std::uint64_t sample_seed = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst; ///< "tensor#index" of the largest relative error
    bool passed = true;
};

/// Central-difference check of d f(x) / dx for scalar-valued f.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double tol);

/// Checks every tensor in `leaves`; f closes over them and must rebuild its graph on each call.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> leaves,
                           const GradCheckOptions& options);

} // namespace mdiqa
