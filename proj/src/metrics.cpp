#include "mdiqa/metrics.hpp"

#include "mdiqa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace mdiqa {

namespace {

void check_pairs(std::span<const double> x, std::span<const double> y, const char* name) {
    if (x.size() != y.size())
        throw DomainError(std::string(name) + ": length mismatch (" + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()) + ")");
    if (x.size() < 2)
        throw DegenerateInputError(std::string(name) + ": need at least 2 pairs");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw DomainError(std::string(name) + ": non-finite value at index " + std::to_string(i));
}

bool has_ties(std::span<const double> v) {
    std::vector<double> s(v.begin(), v.end());
    std::ranges::sort(s);
    return std::adjacent_find(s.begin(), s.end()) != s.end();
}

// Number of pairs within runs of equal keys in a sorted sequence.
template <typename It, typename Eq>
std::uint64_t tied_pairs(It first, It last, Eq eq) {
    std::uint64_t total = 0;
    while (first != last) {
        auto run_end = std::find_if(first, last, [&](const auto& v) { return !eq(*first, v); });
        const auto len = static_cast<std::uint64_t>(run_end - first);
        total += len * (len - 1) / 2;
        first = run_end;
    }
    return total;
}

// Counts strict inversions while merge-sorting `v` in place.
std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo,
                               std::size_t hi) {
    if (hi - lo < 2)
        return 0;
    const auto mid = lo + (hi - lo) / 2;
    std::uint64_t inv = count_inversions(v, scratch, lo, mid) + count_inversions(v, scratch, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            inv += mid - i;
            scratch[k++] = v[j++];
        } else {
            scratch[k++] = v[i++];
        }
    }
    while (i < mid)
        scratch[k++] = v[i++];
    while (j < hi)
        scratch[k++] = v[j++];
    std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return inv;
}

double pearson_raw(std::span<const double> x, std::span<const double> y, const char* name) {
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw DegenerateInputError(std::string(name) + ": correlation undefined for a constant vector");
    return sxy / std::sqrt(sxx * syy);
}

} // namespace

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
            ++j;
        // positions i..j (0-based) share the mean of ranks i+1..j+1
        const double rank = (static_cast<double>(i + j) + 2.0) / 2.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double plcc(std::span<const double> x, std::span<const double> y) {
    check_pairs(x, y, "plcc");
    return std::min(1.0, std::abs(pearson_raw(x, y, "plcc")));
}

double srocc(std::span<const double> x, std::span<const double> y) {
    check_pairs(x, y, "srocc");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    if (!has_ties(x) && !has_ties(y)) {
        // Ranks are integers here, so the rank-difference sum is exact.
        const auto n = static_cast<std::int64_t>(x.size());
        std::int64_t d2 = 0;
        for (std::size_t i = 0; i < rx.size(); ++i) {
            const auto d = static_cast<std::int64_t>(rx[i]) - static_cast<std::int64_t>(ry[i]);
            d2 += d * d;
        }
        const std::int64_t denom = n * (n * n - 1);
        return std::abs(static_cast<double>(denom - 6 * d2) / static_cast<double>(denom));
    }
    return std::min(1.0, std::abs(pearson_raw(rx, ry, "srocc")));
}

double krocc(std::span<const double> x, std::span<const double> y) {
    check_pairs(x, y, "krocc");
    const auto n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::sort(order, [&](std::size_t a, std::size_t b) {
        return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
    });

    const std::uint64_t ties_x =
        tied_pairs(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] == x[b]; });
    const std::uint64_t ties_xy = tied_pairs(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] == x[b] && y[a] == y[b];
    });

    std::vector<double> ys(n), scratch(n);
    for (std::size_t i = 0; i < n; ++i)
        ys[i] = y[order[i]];
    // With x-ties pre-sorted by y, strict inversions are exactly the discordant pairs.
    const std::uint64_t discordant = count_inversions(ys, scratch, 0, n);
    const std::uint64_t ties_y = tied_pairs(ys.begin(), ys.end(), [](double a, double b) { return a == b; });

    const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    const auto concordant = static_cast<std::int64_t>(total - ties_x - ties_y + ties_xy - discordant);
    const auto s = concordant - static_cast<std::int64_t>(discordant);
    return std::abs(static_cast<double>(s) / static_cast<double>(total));
}

double overall(std::span<const double> x, std::span<const double> y) {
    return plcc(x, y) + srocc(x, y) + krocc(x, y);
}

MetricReport evaluate_metrics(std::span<const double> predictions, std::span<const double> truth) {
    MetricReport r;
    r.plcc = plcc(predictions, truth);
    r.srocc = srocc(predictions, truth);
    r.krocc = krocc(predictions, truth);
    r.overall = r.plcc + r.srocc + r.krocc;
    r.n = predictions.size();
    return r;
}

std::string format_report(const MetricReport& report, int precision) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision);
    os << "n: " << report.n << "\n";
    os << "plcc: " << report.plcc << "\n";
    os << "srocc: " << report.srocc << "\n";
    os << "krocc: " << report.krocc << "\n";
    os << "overall: " << report.overall << "\n";
    return os.str();
}

} // namespace mdiqa
