#include <doctest.h>

#include "mdiqa/augment.hpp"
#include "mdiqa/data.hpp"
#include "mdiqa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace mdiqa;
namespace fs = std::filesystem;

namespace {

SyntheticConfig small_config() {
    SyntheticConfig cfg;
    cfg.image_size = 16;
    cfg.n_labeled = 40;
    cfg.n_unlabeled = 12;
    cfg.seed = 5;
    return cfg;
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("mdiqa_test_data_" + name);
    fs::remove_all(dir);
    return dir;
}

double residual_std(const std::vector<double>& noisy, const std::vector<double>& clean) {
    double s = 0.0;
    for (std::size_t i = 0; i < noisy.size(); ++i)
        s += (noisy[i] - clean[i]) * (noisy[i] - clean[i]);
    return std::sqrt(s / static_cast<double>(noisy.size()));
}

} // namespace

TEST_CASE("noise level follows the score") {
    const SyntheticConfig cfg;
    CHECK(noise_sigma(4.0, cfg) == 0.0);
    CHECK(noise_sigma(0.0, cfg) == 0.1);
    CHECK(noise_sigma(2.0, cfg) == doctest::Approx(0.05));

    std::mt19937_64 rng(1);
    const auto clean = render_phantom(64, 1.0, rng);
    CHECK(add_noise(clean, noise_sigma(4.0, cfg), rng) == clean);
    const auto noisy = add_noise(clean, noise_sigma(0.0, cfg), rng);
    CHECK(std::abs(residual_std(noisy, clean) - 0.1) < 0.01);
}

TEST_CASE("residual variance decreases with score") {
    const SyntheticConfig cfg;
    double last = 1e9;
    for (int step = 0; step <= 20; ++step) {
        const double s = step * 0.2;
        double var = 0.0;
        for (std::uint64_t i = 0; i < 8; ++i) {
            auto rng = image_rng(99, 7, i);
            const auto clean = render_phantom(32, 1.0, rng);
            const auto noisy = add_noise(clean, noise_sigma(s, cfg), rng);
            var += std::pow(residual_std(noisy, clean), 2);
        }
        if (step < 20)
            CHECK(var < last);
        else
            CHECK(var == 0.0);
        last = var;
    }
}

TEST_CASE("phantom pixels stay in [0,1]") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 5; ++i) {
        const auto img = add_noise(render_phantom(32, 1.0, rng), 0.1, rng);
        for (double v : img) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("default corpus sizes and label grid") {
    SyntheticConfig cfg;
    cfg.image_size = 16;
    const auto ds = generate_synthetic(cfg);
    CHECK(ds.train.size() == 700);
    CHECK(ds.val.size() == 100);
    CHECK(ds.test.size() == 200);
    CHECK(ds.unlabeled.size() == 490);
    std::set<std::string> ids;
    for (const Manifest* m : {&ds.train, &ds.val, &ds.test}) {
        for (const auto& r : m->records) {
            REQUIRE(r.score);
            const double steps = *r.score / 0.2;
            CHECK(std::abs(steps - std::round(steps)) < 1e-9);
            CHECK(*r.score == std::round(steps) * 2.0 / 10.0);
            CHECK(r.origin == Origin::Labeled);
            ids.insert(r.id);
        }
    }
    CHECK(ids.size() == 1000);
    for (const auto& r : ds.unlabeled.records) {
        CHECK_FALSE(r.score);
        CHECK(r.origin == Origin::Unlabeled);
    }
}

TEST_CASE("generation is deterministic and independent of worker count") {
    auto cfg = small_config();
    const auto a = generate_synthetic(cfg);
    cfg.workers = 4;
    const auto b = generate_synthetic(cfg);
    CHECK(a == b);
    cfg.seed = 6;
    CHECK_FALSE(generate_synthetic(cfg) == a);
}

TEST_CASE("split is a deterministic partition") {
    std::vector<DatasetRecord> records(1000);
    for (std::size_t i = 0; i < records.size(); ++i)
        records[i].id = std::to_string(i);
    const std::vector<double> ratios{0.7, 0.1, 0.2};
    const auto parts = split(records, ratios, 3);
    REQUIRE(parts.size() == 3);
    CHECK(parts[0].size() == 700);
    CHECK(parts[1].size() == 100);
    CHECK(parts[2].size() == 200);
    std::multiset<std::string> all;
    for (const auto& p : parts)
        for (const auto& r : p)
            all.insert(r.id);
    std::multiset<std::string> original;
    for (const auto& r : records)
        original.insert(r.id);
    CHECK(all == original);
    CHECK(split(records, ratios, 3) == parts);
    CHECK_FALSE(split(records, ratios, 4) == parts);
    CHECK_THROWS_AS(split(records, std::vector<double>{0.5, 0.4}, 1), DomainError);
}

TEST_CASE("save and load round-trip") {
    const auto dir = scratch_dir("roundtrip");
    const auto ds = generate_synthetic(small_config());
    save_dataset(ds, dir, "seed = 5");
    const auto back = load_dataset(dir);
    CHECK(back == ds);
    CHECK(read_manifest(dir / "manifests" / "test.csv", dir, Split::Test) == ds.test);
    CHECK(read_text_file(dir / "meta.txt").find("echo seed = 5") != std::string::npos);

    // Byte-identical on a second save.
    const auto dir2 = scratch_dir("roundtrip2");
    save_dataset(ds, dir2, "seed = 5");
    CHECK(read_text_file(dir / "meta.txt") == read_text_file(dir2 / "meta.txt"));
    fs::remove_all(dir2);
    fs::remove_all(dir);
}

TEST_CASE("tampering and missing files are detected") {
    const auto dir = scratch_dir("tamper");
    const auto ds = generate_synthetic(small_config());
    save_dataset(ds, dir);
    const auto victim = dir / "images" / (ds.train.records[0].id + ".f64");
    {
        std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-1, std::ios::end);
        f.put('\x7f');
    }
    CHECK_THROWS_AS(load_dataset(dir), IntegrityError);
    fs::remove(victim);
    CHECK_THROWS_AS(load_dataset(dir), IoError);
    CHECK_THROWS_AS(load_dataset(dir / "nope"), NotFoundError);
    fs::remove_all(dir);
}

TEST_CASE("image file round-trip") {
    const auto dir = scratch_dir("image");
    fs::create_directories(dir);
    DatasetRecord r;
    r.id = "X1";
    r.side = 2;
    r.pixels = {0.1, 0.2, 0.3, 1.0 / 3.0};
    write_image(r, dir / "x.f64");
    const auto back = read_image(dir / "x.f64");
    CHECK(back.id == "X1");
    CHECK(back.pixels == r.pixels);
    fs::remove_all(dir);
}

TEST_CASE("dihedral augmentation") {
    std::vector<double> img(25);
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = static_cast<double>(i);
    CHECK(apply_dihedral(img, 5, Dihedral{}) == img);
    for (int t = 0; t < 8; ++t) {
        const auto d = Dihedral::from_index(t);
        CHECK(d.index() == t);
        auto out = apply_dihedral(img, 5, d);
        auto sorted = out;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == img);
    }
    const Dihedral rot{1, false};
    auto r = img;
    for (int i = 0; i < 4; ++i)
        r = apply_dihedral(r, 5, rot);
    CHECK(r == img);
    const Dihedral flip{0, true};
    CHECK(apply_dihedral(apply_dihedral(img, 5, flip), 5, flip) == img);
    // One quarter turn counter-clockwise moves the top-right corner to the top-left.
    CHECK(apply_dihedral(img, 5, rot)[0] == 4.0);

    std::mt19937_64 rng(1);
    std::vector<int> counts(8, 0);
    for (int i = 0; i < 8000; ++i)
        ++counts[draw_dihedral(rng).index()];
    for (int c : counts)
        CHECK(std::abs(c - 1000) < 150);
    CHECK_THROWS_AS(augment(std::vector<double>(10, 0.0), rng), DomainError);
}
