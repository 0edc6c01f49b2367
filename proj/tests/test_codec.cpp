#include <doctest.h>

#include "mdiqa/codec.hpp"
#include "mdiqa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace mdiqa;

namespace {

double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
        h -= v * std::log(v);
    return h;
}

} // namespace

TEST_CASE("encode places the peak at the left endpoint for s = 0") {
    const CodecConfig cfg;
    const auto v = encode_score(0.0, cfg, 1);
    CHECK(v.values.size() == 101);
    CHECK(v.values[0] == 1.0);
    for (std::size_t j = 1; j < v.values.size(); ++j) {
        // Far tails underflow to exactly zero.
        if (v.values[j - 1] > 0.0)
            CHECK(v.values[j] < v.values[j - 1]);
        else
            CHECK(v.values[j] == 0.0);
    }
}

TEST_CASE("encode is symmetric about the centre for s = 2") {
    const CodecConfig cfg;
    const auto v = encode_score(2.0, cfg, 1);
    CHECK(v.values[50] == 1.0);
    for (std::size_t d = 1; d <= 50; ++d)
        CHECK(v.values[50 - d] == v.values[50 + d]);
}

TEST_CASE("encode matches a hand evaluation of the Gaussian at s = 1.3") {
    const CodecConfig cfg;
    const auto v = encode_score(1.3, cfg, 1);
    const double sigma = 101 * 0.02;
    CHECK(v.values[33] == doctest::Approx(std::exp(-(0.5 * 0.5) / (2 * sigma * sigma))).epsilon(1e-14));
    for (std::size_t j = 0; j < 101; ++j) {
        const double d = static_cast<double>(j) - 32.5;
        CHECK(v.values[j] == doctest::Approx(std::exp(-d * d / (2 * sigma * sigma))).epsilon(1e-13));
    }
}

TEST_CASE("encode rejects out-of-range scores and scale indices") {
    const CodecConfig cfg;
    CHECK_THROWS_AS(encode_score(-0.01, cfg, 0), DomainError);
    CHECK_THROWS_AS(encode_score(4.01, cfg, 0), DomainError);
    CHECK_THROWS_AS(encode_score(std::nan(""), cfg, 0), DomainError);
    CHECK_THROWS_AS(encode_score(1.0, cfg, 3), DomainError);
}

TEST_CASE("decode round-trips every grid point exactly") {
    const CodecConfig cfg;
    for (std::size_t i = 0; i < cfg.grid_size; ++i) {
        const double s = static_cast<double>(i) * 4.0 / 100.0;
        for (std::size_t k = 0; k < cfg.num_scales(); ++k)
            CHECK(decode_distribution(encode_score(s, cfg, k), cfg) == s);
    }
}

TEST_CASE("decode error is bounded by half a grid step") {
    const CodecConfig cfg;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 4.0);
    for (int i = 0; i < 1000; ++i) {
        const double s = u(rng);
        CHECK(std::abs(decode_multiscale(encode_multiscale(s, cfg), cfg) - s) <= 4.0 / 200.0 + 1e-15);
    }
}

TEST_CASE("decode breaks ties toward the lowest index") {
    const CodecConfig cfg;
    std::vector<double> v(101, 0.0);
    v[10] = v[90] = 0.7;
    CHECK(decode_distribution(v, cfg) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(decode_distribution(std::vector<double>(101, 0.3), cfg) == 0.0);
    CHECK_THROWS_AS(decode_distribution(std::vector<double>{}, cfg), DomainError);
}

TEST_CASE("multiscale decode is the mean of per-scale decodes") {
    CodecConfig cfg;
    cfg.scales = {0.01, 0.02};
    std::vector<DistributionVector> vs{encode_score(1.0, cfg, 0), encode_score(3.0, cfg, 1)};
    CHECK(decode_multiscale(vs, cfg) == 2.0);
    vs.pop_back();
    CHECK_THROWS_AS(decode_multiscale(vs, cfg), DomainError);

    const CodecConfig def;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<DistributionVector> r;
        double mean = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            DistributionVector v{std::vector<double>(101), k};
            for (auto& x : v.values)
                x = u(rng);
            mean += decode_distribution(v, def) / 3.0;
            r.push_back(v);
        }
        CHECK(decode_multiscale(r, def) == doctest::Approx(mean).epsilon(1e-15));
    }
}

TEST_CASE("K copies of one vector decode like the vector itself") {
    const CodecConfig cfg;
    const auto v = encode_score(2.48, cfg, 0);
    const std::vector<DistributionVector> copies{v, {v.values, 1}, {v.values, 2}};
    CHECK(decode_multiscale(copies, cfg) == decode_distribution(v, cfg));
}

TEST_CASE("encode(s) and encode(M - s) mirror each other") {
    const CodecConfig cfg;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 4.0);
    for (int i = 0; i < 50; ++i) {
        const double s = u(rng);
        for (std::size_t k = 0; k < cfg.num_scales(); ++k) {
            const auto a = encode_score(s, cfg, k).values;
            const auto b = encode_score(4.0 - s, cfg, k).values;
            for (std::size_t j = 0; j < a.size(); ++j)
                CHECK(a[j] == doctest::Approx(b[a.size() - 1 - j]).epsilon(1e-9));
        }
    }
}

TEST_CASE("the peak index is non-decreasing in s") {
    const CodecConfig cfg;
    long last = -1;
    for (int i = 0; i <= 4000; ++i) {
        const auto v = encode_score(i / 1000.0, cfg, 0).values;
        const long peak = std::max_element(v.begin(), v.end()) - v.begin();
        CHECK(peak >= last);
        last = peak;
    }
}

TEST_CASE("narrower scales have lower entropy") {
    const CodecConfig cfg;
    for (double s : {0.0, 0.7, 2.0, 3.96}) {
        const auto a = normalize_to_probability(encode_score(s, cfg, 0).values);
        const auto b = normalize_to_probability(encode_score(s, cfg, 1).values);
        const auto c = normalize_to_probability(encode_score(s, cfg, 2).values);
        CHECK(entropy(a) < entropy(b));
        CHECK(entropy(b) < entropy(c));
    }
}

TEST_CASE("normalize_to_probability") {
    const auto u = normalize_to_probability(std::vector<double>(4, 0.0), 1e-6);
    for (double v : u)
        CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    const auto one_hot = normalize_to_probability(std::vector<double>{1, 0, 0, 0}, 1e-6);
    double total = 0.0;
    for (double v : one_hot) {
        CHECK(v > 0.0);
        total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-15));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    std::vector<double> r(101);
    for (auto& v : r)
        v = d(rng);
    total = 0.0;
    for (double v : normalize_to_probability(r))
        total += v;
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK_THROWS_AS(normalize_to_probability(r, 0.0), DomainError);
}

TEST_CASE("codec config validation") {
    CodecConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.scales = {0.02, 0.01};
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = {};
    cfg.grid_size = 1;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = {};
    cfg.max_score = 0.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
}
