#include <doctest.h>

#include "mdiqa/errors.hpp"
#include "mdiqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace mdiqa;

namespace {

double pearson_ref(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return std::abs(sxy) / std::sqrt(sxx * syy);
}

// Average ranks by counting, O(n^2).
std::vector<double> ranks_ref(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double less = 0.0, equal = 0.0;
        for (double w : v) {
            less += w < v[i];
            equal += w == v[i];
        }
        r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
}

double kendall_ref(const std::vector<double>& x, const std::vector<double>& y) {
    long c = 0, d = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            const double s = (x[i] - x[j]) * (y[i] - y[j]);
            c += s > 0;
            d += s < 0;
        }
    const double n = static_cast<double>(x.size());
    return std::abs(static_cast<double>(c - d)) / (n * (n - 1) / 2.0);
}

} // namespace

TEST_CASE("plcc") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    CHECK(plcc(x, x) == doctest::Approx(1.0).epsilon(1e-15));
    std::vector<double> y;
    for (double v : x)
        y.push_back(-2 * v + 7);
    CHECK(plcc(x, y) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(plcc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4}) ==
          doctest::Approx(3.0 / std::sqrt(2.0 * 14.0 / 3.0)).epsilon(1e-14));
    CHECK(plcc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4}) == doctest::Approx(0.98198).epsilon(1e-5));
    CHECK_THROWS_AS(plcc(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateInputError);
    CHECK_THROWS_AS(plcc(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), DomainError);
}

TEST_CASE("srocc") {
    const std::vector<double> x{1, 2, 3, 4};
    CHECK(srocc(x, x) == 1.0);
    CHECK(srocc(x, std::vector<double>{4, 3, 2, 1}) == 1.0);
    CHECK(srocc(x, std::vector<double>{1, 3, 2, 4}) == 0.8);
    CHECK_THROWS_AS(srocc(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}), DegenerateInputError);
}

TEST_CASE("krocc") {
    CHECK(krocc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 1.0);
    CHECK(krocc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}) == 1.0 / 3.0);
    CHECK_THROWS_AS(krocc(std::vector<double>{1}, std::vector<double>{1}), DegenerateInputError);
}

TEST_CASE("overall and report") {
    const std::vector<double> x{0.2, 1.4, 2.0, 3.8};
    CHECK(overall(x, x) == 3.0);
    std::vector<double> rev;
    for (double v : x)
        rev.push_back(4.0 - v);
    CHECK(overall(x, rev) == doctest::Approx(3.0).epsilon(1e-15));
    const std::vector<double> y{0.0, 2.0, 1.0, 4.0};
    CHECK(overall(x, y) == plcc(x, y) + srocc(x, y) + krocc(x, y));
    const auto r = evaluate_metrics(x, x);
    CHECK(format_report(r, 4) == "n: 4\nplcc: 1.0000\nsrocc: 1.0000\nkrocc: 1.0000\noverall: 3.0000\n");
}

TEST_CASE("average ranks") {
    CHECK(average_ranks(std::vector<double>{10, 30, 20, 20}) == std::vector<double>{1, 4, 2.5, 2.5});
}

TEST_CASE("fast implementations agree with definitional oracles") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 200)(rng);
        const bool ties = trial % 2 == 0;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (ties) {
                x[i] = std::uniform_int_distribution<int>(0, 20)(rng) * 0.2;
                y[i] = std::uniform_int_distribution<int>(0, 9)(rng);
            } else {
                x[i] = std::normal_distribution<double>()(rng);
                y[i] = x[i] + std::normal_distribution<double>()(rng);
            }
        }
        if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
            std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; }))
            continue;
        CHECK(std::abs(plcc(x, y) - pearson_ref(x, y)) < 1e-10);
        CHECK(std::abs(srocc(x, y) - pearson_ref(ranks_ref(x), ranks_ref(y))) < 1e-10);
        CHECK(std::abs(krocc(x, y) - kendall_ref(x, y)) < 1e-10);
        CHECK(average_ranks(x) == ranks_ref(x));
    }
}

TEST_CASE("rank metrics are invariant under monotone maps and permutations") {
    std::mt19937_64 rng(8);
    std::vector<double> x(60), y(60);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = std::normal_distribution<double>()(rng);
        y[i] = std::uniform_int_distribution<int>(0, 20)(rng) * 0.2;
    }
    std::vector<double> fx;
    for (double v : x)
        fx.push_back(std::exp(v) * 3.0 + 1.0);
    CHECK(srocc(fx, y) == doctest::Approx(srocc(x, y)).epsilon(1e-14));
    CHECK(krocc(fx, y) == krocc(x, y));
    std::vector<double> ax;
    for (double v : x)
        ax.push_back(2.5 * v - 4.0);
    CHECK(plcc(ax, y) == doctest::Approx(plcc(x, y)).epsilon(1e-13));

    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> px, py;
    for (auto i : perm) {
        px.push_back(x[i]);
        py.push_back(y[i]);
    }
    CHECK(plcc(px, py) == doctest::Approx(plcc(x, y)).epsilon(1e-13));
    CHECK(srocc(px, py) == doctest::Approx(srocc(x, y)).epsilon(1e-13));
    CHECK(krocc(px, py) == krocc(x, y));
}

TEST_CASE("no-tie closed form equals Pearson of ranks") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(40), y(40);
        for (std::size_t i = 0; i < 40; ++i) {
            x[i] = std::normal_distribution<double>()(rng);
            y[i] = std::normal_distribution<double>()(rng);
        }
        CHECK(std::abs(srocc(x, y) - pearson_ref(ranks_ref(x), ranks_ref(y))) < 1e-12);
    }
}
