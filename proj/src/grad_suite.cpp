#include "mdiqa/grad_suite.hpp"

#include "mdiqa/data.hpp"
#include "mdiqa/losses.hpp"
#include "mdiqa/ops.hpp"

#include <functional>
#include <random>

namespace mdiqa {

namespace {

using Rng = std::mt19937_64;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v)
        x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

// Values bounded away from zero, so kinked ops are checked off their kink.
Tensor off_kink_tensor(Shape shape, Rng& rng) {
    std::uniform_real_distribution<double> mag(0.05, 2.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v)
        x = sign(rng) ? mag(rng) : -mag(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

// Contracts an op's output with fixed random weights so every output
// coordinate carries a distinct upstream gradient.
Tensor probe(const Tensor& y, const Tensor& weights) { return ops::sum(ops::mul(y, weights)); }

Tensor weights_like(const Shape& shape, Rng& rng) {
    auto w = random_tensor(shape, rng);
    w.set_requires_grad(false);
    return w;
}

struct Case {
    std::string name;
    // Builds leaves and the scalar function for one random instance.
    std::function<std::pair<std::vector<Tensor>, std::function<Tensor()>>(Rng&)> build;
};

// Output shape is needed for the probe weights; evaluate once without grad.
Shape shape_of(const std::function<Tensor()>& f) {
    NoGradGuard guard;
    return f().shape();
}

std::function<Tensor()> probed(std::function<Tensor()> f, Rng& rng) {
    const auto w = weights_like(shape_of(f), rng);
    return [f = std::move(f), w] { return probe(f(), w); };
}

Case unary(std::string name, std::function<Tensor(const Tensor&)> op, bool off_kink = false,
           Shape shape = {2, 3, 4}) {
    return {std::move(name), [op, off_kink, shape](Rng& rng) {
                Tensor x = off_kink ? off_kink_tensor(shape, rng) : random_tensor(shape, rng);
                auto f = probed([op, x] { return op(x); }, rng);
                return std::pair{std::vector<Tensor>{x}, f};
            }};
}

Case binary(std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op, Shape sa, Shape sb,
            bool positive_b = false) {
    return {std::move(name), [op, sa, sb, positive_b](Rng& rng) {
                Tensor a = random_tensor(sa, rng);
                Tensor b = positive_b ? random_tensor(sb, rng, 0.5, 1.5) : random_tensor(sb, rng);
                auto f = probed([op, a, b] { return op(a, b); }, rng);
                return std::pair{std::vector<Tensor>{a, b}, f};
            }};
}

ScaleTensors random_distributions(std::size_t scales, std::size_t batch, std::size_t n, Rng& rng, bool leaf) {
    ScaleTensors out;
    for (std::size_t k = 0; k < scales; ++k) {
        // Predictions straddle zero to exercise the KL's negative branch.
        auto t = leaf ? random_tensor({batch, n}, rng, -0.5, 1.0) : random_tensor({batch, n}, rng, 0.0, 1.0);
        t.set_requires_grad(leaf);
        out.push_back(t);
    }
    return out;
}

Case loss_case(std::string name, std::function<Tensor(const ScaleTensors&, const ScaleTensors&)> loss) {
    return {std::move(name), [loss](Rng& rng) {
                auto pred = random_distributions(3, 2, 11, rng, true);
                const auto target = random_distributions(3, 2, 11, rng, false);
                std::vector<Tensor> leaves(pred.begin(), pred.end());
                return std::pair{leaves, std::function<Tensor()>([loss, pred, target] { return loss(pred, target); })};
            }};
}

std::vector<Case> op_cases() {
    using namespace ops;
    std::vector<Case> cases;
    cases.push_back(binary("dense", [](const Tensor& x, const Tensor& w) {
        static const Tensor b = Tensor::from({3}, {0.1, -0.2, 0.3});
        return dense(x, w, b);
    }, {2, 4}, {4, 3}));
    cases.push_back({"dense.bias", [](Rng& rng) {
                         const Tensor x = weights_like({2, 4}, rng);
                         const Tensor w = weights_like({4, 3}, rng);
                         Tensor b = random_tensor({3}, rng);
                         auto f = probed([x, w, b] { return dense(x, w, b); }, rng);
                         return std::pair{std::vector<Tensor>{b}, f};
                     }});
    for (std::size_t stride : {1, 2})
        for (std::size_t pad : {0, 1})
            cases.push_back({"conv2d.s" + std::to_string(stride) + "p" + std::to_string(pad),
                             [stride, pad](Rng& rng) {
                                 Tensor x = random_tensor({2, 2, 5, 5}, rng);
                                 Tensor k = random_tensor({3, 2, 3, 3}, rng);
                                 Tensor b = random_tensor({3}, rng);
                                 auto f = probed([=] { return conv2d(x, k, b, stride, pad); }, rng);
                                 return std::pair{std::vector<Tensor>{x, k, b}, f};
                             }});
    cases.push_back(unary("relu", relu, true));
    cases.push_back(unary("leaky_relu", [](const Tensor& x) { return leaky_relu(x, 0.1); }, true));
    cases.push_back(unary("sigmoid", sigmoid));
    cases.push_back(binary("add", add, {2, 3}, {2, 3}));
    cases.push_back(binary("add.scalar", add, {2, 3}, {}));
    cases.push_back(binary("sub", sub, {2, 3}, {2, 3}));
    cases.push_back(binary("sub.scalar", sub, {}, {2, 3}));
    cases.push_back(binary("mul", mul, {2, 3}, {2, 3}));
    cases.push_back(binary("mul.scalar", mul, {2, 3}, {}));
    cases.push_back(binary("div", div, {2, 3}, {2, 3}, true));
    cases.push_back(binary("div.scalar", div, {2, 3}, {}, true));
    cases.push_back(unary("add_scalar", [](const Tensor& x) { return add_scalar(x, 0.7); }));
    cases.push_back(unary("mul_scalar", [](const Tensor& x) { return mul_scalar(x, -1.3); }));
    cases.push_back(unary("square", square));
    cases.push_back(unary("sum", sum));
    cases.push_back(unary("mean", mean));
    cases.push_back(unary("sum_over", [](const Tensor& x) { return sum_over(x, {0, 2}); }));
    cases.push_back(unary("avg_pool2d", [](const Tensor& x) { return avg_pool2d(x, 2); }, false, {2, 2, 4, 6}));
    cases.push_back(unary("global_avg_pool", global_avg_pool, false, {2, 3, 4, 5}));
    cases.push_back(unary("broadcast_spatial", [](const Tensor& x) { return broadcast_spatial(x, 3, 2); }, false,
                          {2, 3}));
    cases.push_back({"concat_channels", [](Rng& rng) {
                         Tensor a = random_tensor({2, 2, 3, 3}, rng);
                         Tensor b = random_tensor({2, 3, 3, 3}, rng);
                         auto f = probed([a, b] { return concat_channels(a, b); }, rng);
                         return std::pair{std::vector<Tensor>{a, b}, f};
                     }});
    cases.push_back(unary("reshape", [](const Tensor& x) { return reshape(x, {4, 6}); }));

    cases.push_back(loss_case("l2_distribution_loss", l2_distribution_loss));
    cases.push_back(loss_case("kl_distribution_loss.target_pred", [](const ScaleTensors& p, const ScaleTensors& t) {
        return kl_distribution_loss(p, t, 1e-8, KlDirection::TargetToPrediction);
    }));
    cases.push_back(loss_case("kl_distribution_loss.pred_target", [](const ScaleTensors& p, const ScaleTensors& t) {
        return kl_distribution_loss(p, t, 1e-8, KlDirection::PredictionToTarget);
    }));
    cases.push_back(loss_case("consistency_loss", consistency_loss));
    return cases;
}

GradSuiteEntry run_case(const Case& c, const GradSuiteOptions& options, double tol, double step_scale,
                        std::size_t coords, std::uint64_t stream) {
    GradSuiteEntry entry{c.name, options.instances, tol, {}, true};
    for (std::size_t i = 0; i < options.instances; ++i) {
        Rng rng(derive_seed(derive_seed(options.seed, stream), i));
        auto [leaves, f] = c.build(rng);
        GradCheckOptions gc;
        gc.tol = tol;
        gc.step_scale = step_scale;
        gc.refinements = 2;
        gc.max_coords_per_tensor = coords;
        gc.sample_seed = derive_seed(options.seed, 1000 + i);
        const auto report = grad_check(f, leaves, gc);
        if (i == 0 || report.max_rel_error > entry.worst.max_rel_error)
            entry.worst = report;
        entry.passed = entry.passed && report.passed;
    }
    return entry;
}

} // namespace

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options) {
    std::vector<GradSuiteEntry> out;
    const auto cases = op_cases();
    for (std::size_t i = 0; i < cases.size(); ++i)
        out.push_back(run_case(cases[i], options, options.op_tol, options.op_step_scale, 0, i));

    const auto model_cfg = options.model;
    const Case model_case{"quality_model", [model_cfg](Rng& rng) {
                              auto model = std::make_shared<QualityModel>(init_model(model_cfg, rng()));
                              // Random biases too, so the check does not sit on the zero-init point.
                              for (auto& p : model->parameters())
                                  for (auto& v : p.tensor.mutable_values())
                                      v += std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
                              const auto side = model_cfg.input_size;
                              auto x = random_tensor({2, 1, side, side}, rng, 0.0, 1.0);
                              x.set_requires_grad(false);
                              std::vector<Tensor> weights;
                              {
                                  NoGradGuard guard;
                                  for (const auto& y : model->forward(x))
                                      weights.push_back(weights_like(y.shape(), rng));
                              }
                              std::function<Tensor()> f = [model, x, weights] {
                                  const auto out = model->forward(x);
                                  Tensor total = probe(out[0], weights[0]);
                                  for (std::size_t k = 1; k < out.size(); ++k)
                                      total = ops::add(total, probe(out[k], weights[k]));
                                  return total;
                              };
                              return std::pair{model->parameter_tensors(), f};
                          }};
    out.push_back(run_case(model_case, options, options.model_tol, options.model_step_scale,
                           options.model_coords_per_tensor, 999));
    return out;
}

} // namespace mdiqa
