#include "mdiqa/grad_check.hpp"

#include "mdiqa/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

namespace mdiqa {

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double tol) {
    GradCheckOptions options;
    options.tol = tol;
    std::array<Tensor, 1> leaves{x};
    return grad_check([&] { return f(x); }, leaves, options);
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> leaves,
                           const GradCheckOptions& options) {
    if (!(options.tol > 0.0))
        throw DomainError("grad_check: tol must be positive");

    std::vector<bool> previous_flags;
    for (auto& leaf : leaves) {
        previous_flags.push_back(leaf.requires_grad());
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    {
        const Tensor loss = f();
        loss.backward();
    }
    std::vector<std::vector<double>> analytic;
    for (const auto& leaf : leaves)
        analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());

    GradCheckReport report;
    std::mt19937_64 rng(options.sample_seed);
    auto evaluate = [&] {
        NoGradGuard guard;
        return f().item();
    };

    for (std::size_t t = 0; t < leaves.size(); ++t) {
        auto& leaf = leaves[t];
        std::vector<std::size_t> coords(leaf.numel());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coords_per_tensor != 0 && coords.size() > options.max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        auto values = leaf.mutable_values();
        for (auto i : coords) {
            const double original = values[i];
            const double exact = analytic[t][i];
            double h = options.step_scale * std::max(1.0, std::abs(original));
            double abs_err = 0.0, rel_err = 0.0;
            for (std::size_t attempt = 0; attempt <= options.refinements; ++attempt, h /= 10.0) {
                values[i] = original + h;
                const double up = evaluate();
                values[i] = original - h;
                const double down = evaluate();
                values[i] = original;

                const double numeric = (up - down) / (2.0 * h);
                const double a = std::abs(numeric - exact);
                const double r = a / std::max({std::abs(numeric), std::abs(exact), options.abs_floor});
                if (attempt == 0 || r < rel_err) {
                    abs_err = a;
                    rel_err = r;
                }
                if (rel_err < options.tol)
                    break;
            }
            ++report.coordinates;
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (!(rel_err <= report.max_rel_error)) {
                report.max_rel_error = rel_err;
                report.worst = std::to_string(t) + "#" + std::to_string(i);
            }
        }
    }
    report.passed = report.max_rel_error < options.tol;

    for (std::size_t t = 0; t < leaves.size(); ++t) {
        leaves[t].zero_grad();
        leaves[t].set_requires_grad(previous_flags[t]);
    }
    return report;
}

} // namespace mdiqa
