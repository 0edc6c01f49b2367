#include "mdiqa/ops.hpp"

#include "mdiqa/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>

namespace mdiqa::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
}

bool is_scalar(const Tensor& t) { return t.rank() == 0 && t.numel() == 1; }

template <typename Forward, typename GradA, typename GradB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Forward fwd, GradA ga, GradB gb) {
    const bool a_scalar = is_scalar(a) && !is_scalar(b);
    const bool b_scalar = is_scalar(b) && !is_scalar(a);
    if (!a_scalar && !b_scalar && a.shape() != b.shape())
        throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const Shape out_shape = a_scalar ? b.shape() : a.shape();
    const auto n = shape_numel(out_shape);
    const auto av = a.values();
    const auto bv = b.values();
    auto ai = [a_scalar](std::size_t i) { return a_scalar ? std::size_t{0} : i; };
    auto bi = [b_scalar](std::size_t i) { return b_scalar ? std::size_t{0} : i; };

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = fwd(av[ai(i)], bv[bi(i)]);

    return Tensor::make_result(out_shape, std::move(out), {a, b}, name,
                               [a, b, n, ai, bi, ga, gb](std::span<const double> g) {
                                   const auto av = a.values();
                                   const auto bv = b.values();
                                   if (a.requires_grad()) {
                                       auto da = a.grad_buffer();
                                       for (std::size_t i = 0; i < n; ++i)
                                           da[ai(i)] += g[i] * ga(av[ai(i)], bv[bi(i)]);
                                   }
                                   if (b.requires_grad()) {
                                       auto db = b.grad_buffer();
                                       for (std::size_t i = 0; i < n; ++i)
                                           db[bi(i)] += g[i] * gb(av[ai(i)], bv[bi(i)]);
                                   }
                               });
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, const char* name, Forward fwd, Derivative deriv) {
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i)
        out[i] = fwd(xv[i]);
    return Tensor::make_result(x.shape(), std::move(out), {x}, name, [x, deriv](std::span<const double> g) {
        const auto xv = x.values();
        auto dx = x.grad_buffer();
        for (std::size_t i = 0; i < xv.size(); ++i)
            dx[i] += g[i] * deriv(xv[i]);
    });
}

} // namespace

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(x, 2, "dense", "input");
    require_rank(weight, 2, "dense", "weight");
    require_rank(bias, 1, "dense", "bias");
    const auto batch = x.dim(0), in = x.dim(1), out = weight.dim(1);
    if (weight.dim(0) != in || bias.dim(0) != out)
        throw ShapeError("dense: incompatible shapes x" + shape_str(x.shape()) + " W" + shape_str(weight.shape()) +
                         " b" + shape_str(bias.shape()));

    Eigen::Map<const RowMatrix> xm(x.values().data(), batch, in);
    Eigen::Map<const RowMatrix> wm(weight.values().data(), in, out);
    Eigen::Map<const Eigen::RowVectorXd> bm(bias.values().data(), out);
    std::vector<double> y(batch * out);
    Eigen::Map<RowMatrix> ym(y.data(), batch, out);
    ym.noalias() = xm * wm;
    ym.rowwise() += bm;

    return Tensor::make_result({batch, out}, std::move(y), {x, weight, bias}, "dense",
                               [x, weight, bias, batch, in, out](std::span<const double> g) {
                                   Eigen::Map<const RowMatrix> gm(g.data(), batch, out);
                                   Eigen::Map<const RowMatrix> xm(x.values().data(), batch, in);
                                   Eigen::Map<const RowMatrix> wm(weight.values().data(), in, out);
                                   if (x.requires_grad()) {
                                       Eigen::Map<RowMatrix> dx(x.grad_buffer().data(), batch, in);
                                       dx.noalias() += gm * wm.transpose();
                                   }
                                   if (weight.requires_grad()) {
                                       Eigen::Map<RowMatrix> dw(weight.grad_buffer().data(), in, out);
                                       dw.noalias() += xm.transpose() * gm;
                                   }
                                   if (bias.requires_grad()) {
                                       Eigen::Map<Eigen::RowVectorXd> db(bias.grad_buffer().data(), out);
                                       db += gm.colwise().sum();
                                   }
                               });
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride, std::size_t padding) {
    require_rank(x, 4, "conv2d", "input");
    require_rank(kernels, 4, "conv2d", "kernels");
    require_rank(bias, 1, "conv2d", "bias");
    if (stride == 0)
        throw ShapeError("conv2d: stride must be positive");
    const auto batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
    const auto out_channels = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    if (kernels.dim(1) != channels || bias.dim(0) != out_channels)
        throw ShapeError("conv2d: incompatible shapes x" + shape_str(x.shape()) + " k" +
                         shape_str(kernels.shape()) + " b" + shape_str(bias.shape()));
    if (kh == 0 || kw == 0 || height + 2 * padding < kh || width + 2 * padding < kw)
        throw ShapeError("conv2d: kernel larger than padded input");
    const auto out_h = (height + 2 * padding - kh) / stride + 1;
    const auto out_w = (width + 2 * padding - kw) / stride + 1;
    const auto patch = channels * kh * kw;
    const auto pixels = out_h * out_w;
    const auto columns = batch * pixels;

    // im2col: one column of `patch` entries per output pixel.
    auto cols = std::make_shared<ColMatrix>(patch, columns);
    {
        const auto xv = x.values();
        double* base = cols->data();
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t oy = 0; oy < out_h; ++oy)
                for (std::size_t ox = 0; ox < out_w; ++ox) {
                    double* dst = base + (b * pixels + oy * out_w + ox) * patch;
                    for (std::size_t c = 0; c < channels; ++c)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                            static_cast<std::ptrdiff_t>(padding);
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                static_cast<std::ptrdiff_t>(padding);
                                const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(height) &&
                                                    ix < static_cast<std::ptrdiff_t>(width);
                                *dst++ = inside ? xv[((b * channels + c) * height + static_cast<std::size_t>(iy)) *
                                                         width +
                                                     static_cast<std::size_t>(ix)]
                                                : 0.0;
                            }
                        }
                }
    }

    Eigen::Map<const RowMatrix> km(kernels.values().data(), out_channels, patch);
    RowMatrix result = km * (*cols);
    const auto bv = bias.values();
    std::vector<double> y(batch * out_channels * pixels);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_channels; ++o) {
            const double* src = result.data() + o * columns + b * pixels;
            double* dst = y.data() + (b * out_channels + o) * pixels;
            for (std::size_t p = 0; p < pixels; ++p)
                dst[p] = src[p] + bv[o];
        }

    return Tensor::make_result(
        {batch, out_channels, out_h, out_w}, std::move(y), {x, kernels, bias}, "conv2d",
        [=](std::span<const double> g) {
            RowMatrix gm(out_channels, columns);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t o = 0; o < out_channels; ++o)
                    std::copy_n(g.data() + (b * out_channels + o) * pixels, pixels,
                                gm.data() + o * columns + b * pixels);
            Eigen::Map<const RowMatrix> km(kernels.values().data(), out_channels, patch);
            if (kernels.requires_grad()) {
                Eigen::Map<RowMatrix> dk(kernels.grad_buffer().data(), out_channels, patch);
                dk.noalias() += gm * cols->transpose();
            }
            if (bias.requires_grad()) {
                Eigen::Map<Eigen::VectorXd> db(bias.grad_buffer().data(), out_channels);
                db += gm.rowwise().sum();
            }
            if (x.requires_grad()) {
                ColMatrix dcols = km.transpose() * gm;
                auto dx = x.grad_buffer();
                const double* src = dcols.data();
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t oy = 0; oy < out_h; ++oy)
                        for (std::size_t ox = 0; ox < out_w; ++ox)
                            for (std::size_t c = 0; c < channels; ++c)
                                for (std::size_t ky = 0; ky < kh; ++ky) {
                                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                    static_cast<std::ptrdiff_t>(padding);
                                    for (std::size_t kx = 0; kx < kw; ++kx, ++src) {
                                        const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                        static_cast<std::ptrdiff_t>(padding);
                                        if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(height) ||
                                            ix >= static_cast<std::ptrdiff_t>(width))
                                            continue;
                                        dx[((b * channels + c) * height + static_cast<std::size_t>(iy)) * width +
                                           static_cast<std::size_t>(ix)] += *src;
                                    }
                                }
            }
        });
}

Tensor relu(const Tensor& x) {
    return unary(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
    return unary(
        x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
    auto sig = [](double v) {
        if (v >= 0.0)
            return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    };
    return unary(x, "sigmoid", sig, [sig](double v) {
        const double s = sig(v);
        return s * (1.0 - s);
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double p, double q) { return p + q; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double p, double q) { return p - q; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double p, double q) { return p * q; }, [](double, double q) { return q; },
        [](double p, double) { return p; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    for (double v : b.values())
        if (v == 0.0)
            throw NumericError("div: division by zero");
    return binary(
        a, b, "div", [](double p, double q) { return p / q; }, [](double, double q) { return 1.0 / q; },
        [](double p, double q) { return -p / (q * q); });
}

Tensor add_scalar(const Tensor& x, double c) {
    return unary(x, "add_scalar", [c](double v) { return v + c; }, [](double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
    return unary(x, "mul_scalar", [c](double v) { return v * c; }, [c](double) { return c; });
}

Tensor square(const Tensor& x) {
    return unary(x, "square", [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values())
        total += v;
    return Tensor::make_result({}, {total}, {x}, "sum", [x](std::span<const double> g) {
        for (auto& d : x.grad_buffer())
            d += g[0];
    });
}

Tensor mean(const Tensor& x) {
    const auto n = x.numel();
    if (n == 0)
        throw ShapeError("mean: empty tensor");
    double total = 0.0;
    for (double v : x.values())
        total += v;
    const double inv = 1.0 / static_cast<double>(n);
    return Tensor::make_result({}, {total * inv}, {x}, "mean", [x, inv](std::span<const double> g) {
        for (auto& d : x.grad_buffer())
            d += g[0] * inv;
    });
}

Tensor sum_over(const Tensor& x, const std::vector<std::size_t>& axes) {
    const auto& in_shape = x.shape();
    std::vector<bool> reduced(in_shape.size(), false);
    for (auto a : axes) {
        if (a >= in_shape.size() || reduced[a])
            throw ShapeError("sum_over: invalid or repeated axis " + std::to_string(a) + " for " +
                             shape_str(in_shape));
        reduced[a] = true;
    }
    Shape out_shape;
    for (std::size_t i = 0; i < in_shape.size(); ++i)
        if (!reduced[i])
            out_shape.push_back(in_shape[i]);

    // Output stride contributed by each input axis (0 for reduced axes).
    std::vector<std::size_t> out_stride(in_shape.size(), 0);
    {
        std::size_t s = 1;
        for (std::size_t i = in_shape.size(); i-- > 0;)
            if (!reduced[i]) {
                out_stride[i] = s;
                s *= in_shape[i];
            }
    }
    const auto n = x.numel();
    auto index_map = std::make_shared<std::vector<std::size_t>>(n);
    {
        std::vector<std::size_t> idx(in_shape.size(), 0);
        for (std::size_t flat = 0; flat < n; ++flat) {
            std::size_t o = 0;
            for (std::size_t i = 0; i < idx.size(); ++i)
                o += idx[i] * out_stride[i];
            (*index_map)[flat] = o;
            for (std::size_t i = idx.size(); i-- > 0;) {
                if (++idx[i] < in_shape[i])
                    break;
                idx[i] = 0;
            }
        }
    }
    std::vector<double> out(shape_numel(out_shape), 0.0);
    const auto xv = x.values();
    for (std::size_t i = 0; i < n; ++i)
        out[(*index_map)[i]] += xv[i];
    return Tensor::make_result(std::move(out_shape), std::move(out), {x}, "sum_over",
                               [x, index_map](std::span<const double> g) {
                                   auto dx = x.grad_buffer();
                                   for (std::size_t i = 0; i < dx.size(); ++i)
                                       dx[i] += g[(*index_map)[i]];
                               });
}

Tensor avg_pool2d(const Tensor& x, std::size_t k) {
    require_rank(x, 4, "avg_pool2d", "input");
    const auto batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
    if (k == 0 || height % k != 0 || width % k != 0)
        throw ShapeError("avg_pool2d: window " + std::to_string(k) + " does not tile " + shape_str(x.shape()));
    const auto out_h = height / k, out_w = width / k;
    const double inv = 1.0 / static_cast<double>(k * k);
    const auto planes = batch * channels;
    const auto xv = x.values();
    std::vector<double> out(planes * out_h * out_w, 0.0);
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t xx = 0; xx < width; ++xx)
                out[(p * out_h + y / k) * out_w + xx / k] += xv[(p * height + y) * width + xx] * inv;
    return Tensor::make_result({batch, channels, out_h, out_w}, std::move(out), {x}, "avg_pool2d",
                               [=](std::span<const double> g) {
                                   auto dx = x.grad_buffer();
                                   for (std::size_t p = 0; p < planes; ++p)
                                       for (std::size_t y = 0; y < height; ++y)
                                           for (std::size_t xx = 0; xx < width; ++xx)
                                               dx[(p * height + y) * width + xx] +=
                                                   g[(p * out_h + y / k) * out_w + xx / k] * inv;
                               });
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 4, "global_avg_pool", "input");
    const auto batch = x.dim(0), channels = x.dim(1);
    const auto area = x.dim(2) * x.dim(3);
    if (area == 0)
        throw ShapeError("global_avg_pool: empty spatial extent");
    const double inv = 1.0 / static_cast<double>(area);
    const auto xv = x.values();
    std::vector<double> out(batch * channels, 0.0);
    for (std::size_t p = 0; p < batch * channels; ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < area; ++i)
            s += xv[p * area + i];
        out[p] = s * inv;
    }
    return Tensor::make_result({batch, channels}, std::move(out), {x}, "global_avg_pool",
                               [x, area, inv](std::span<const double> g) {
                                   auto dx = x.grad_buffer();
                                   for (std::size_t i = 0; i < dx.size(); ++i)
                                       dx[i] += g[i / area] * inv;
                               });
}

Tensor broadcast_spatial(const Tensor& x, std::size_t height, std::size_t width) {
    require_rank(x, 2, "broadcast_spatial", "input");
    const auto batch = x.dim(0), channels = x.dim(1);
    const auto area = height * width;
    const auto xv = x.values();
    std::vector<double> out(batch * channels * area);
    for (std::size_t p = 0; p < batch * channels; ++p)
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(p * area), area, xv[p]);
    return Tensor::make_result({batch, channels, height, width}, std::move(out), {x}, "broadcast_spatial",
                               [x, area](std::span<const double> g) {
                                   auto dx = x.grad_buffer();
                                   for (std::size_t p = 0; p < dx.size(); ++p) {
                                       double s = 0.0;
                                       for (std::size_t i = 0; i < area; ++i)
                                           s += g[p * area + i];
                                       dx[p] += s;
                                   }
                               });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_rank(a, 4, "concat_channels", "first input");
    require_rank(b, 4, "concat_channels", "second input");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw ShapeError("concat_channels: mismatched " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const auto batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), area = a.dim(2) * a.dim(3);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(batch * (ca + cb) * area);
    for (std::size_t n = 0; n < batch; ++n) {
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(n * ca * area), ca * area,
                    out.begin() + static_cast<std::ptrdiff_t>(n * (ca + cb) * area));
        std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(n * cb * area), cb * area,
                    out.begin() + static_cast<std::ptrdiff_t>((n * (ca + cb) + ca) * area));
    }
    return Tensor::make_result({batch, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b}, "concat_channels",
                               [a, b, batch, ca, cb, area](std::span<const double> g) {
                                   for (std::size_t n = 0; n < batch; ++n) {
                                       const double* src = g.data() + n * (ca + cb) * area;
                                       if (a.requires_grad()) {
                                           auto da = a.grad_buffer();
                                           for (std::size_t i = 0; i < ca * area; ++i)
                                               da[n * ca * area + i] += src[i];
                                       }
                                       if (b.requires_grad()) {
                                           auto db = b.grad_buffer();
                                           for (std::size_t i = 0; i < cb * area; ++i)
                                               db[n * cb * area + i] += src[ca * area + i];
                                       }
                                   }
                               });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    std::vector<double> out(x.values().begin(), x.values().end());
    return Tensor::make_result(std::move(shape), std::move(out), {x}, "reshape", [x](std::span<const double> g) {
        auto dx = x.grad_buffer();
        for (std::size_t i = 0; i < dx.size(); ++i)
            dx[i] += g[i];
    });
}

} // namespace mdiqa::ops
