#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mdiqa {

enum class Origin { Labeled, Unlabeled, Pseudo };
enum class Split { Train, Val, Test, Unlabeled, Pseudo };

std::string to_string(Origin origin);
std::string to_string(Split split);
Origin parse_origin(const std::string& text);

enum class NoiseMap { Linear, Gamma };

struct SyntheticConfig {
    std::size_t image_size = 64;
    std::size_t n_labeled = 1000;
    std::size_t n_unlabeled = 490;
    double max_score = 4.0;
    double score_step = 0.2;
    double sigma_max = 0.1;
    NoiseMap noise_map = NoiseMap::Linear;
    double noise_gamma = 2.0;
    double blur_sigma = 1.0;
    std::vector<double> split_ratios{0.7, 0.1, 0.2};
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    std::size_t grid_points() const; ///< number of admissible scores on [0, max_score]
    double grid_score(std::size_t i) const;
    void validate() const;
};

struct DatasetRecord {
    std::string id;
    std::size_t side = 0;
    std::vector<double> pixels; ///< side x side, row-major, values in [0,1]
    std::optional<double> score;
    Origin origin = Origin::Labeled;

    bool operator==(const DatasetRecord&) const = default;
};

struct Manifest {
    Split split = Split::Train;
    std::vector<DatasetRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    /// FNV-1a of the manifest's CSV rendering.
    std::string checksum() const;

    bool operator==(const Manifest&) const = default;
};

struct Dataset {
    Manifest train{Split::Train, {}};
    Manifest val{Split::Val, {}};
    Manifest test{Split::Test, {}};
    Manifest unlabeled{Split::Unlabeled, {}};

    bool operator==(const Dataset&) const = default;
};

/// Noise standard deviation assigned to a quality score (0 at the best score).
double noise_sigma(double score, const SyntheticConfig& cfg);

/// Smooth phantom: a disk on a flat background with 4-8 random ellipses, blurred.
std::vector<double> render_phantom(std::size_t side, double blur_sigma, std::mt19937_64& rng);

/// Adds zero-mean Gaussian noise of the given std and clips to [0,1].
std::vector<double> add_noise(std::span<const double> clean, double sigma, std::mt19937_64& rng);

/// Independent RNG stream for one image, so generation order does not matter.
std::mt19937_64 image_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Decorrelated child seed for a named random stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Dataset generate_synthetic(const SyntheticConfig& cfg);

/// Shuffles with `seed` and cuts into consecutive parts of the given ratios.
std::vector<std::vector<DatasetRecord>> split(std::vector<DatasetRecord> records, std::span<const double> ratios,
                                              std::uint64_t seed);

std::uint64_t fnv1a(std::span<const unsigned char> bytes);
std::string hex64(std::uint64_t v);

// Persistence. Layout under `dir`: images/<id>.f64, manifests/<split>.csv, meta.txt.

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir, const std::string& config_echo = {});
/// Verifies every checksum recorded in meta.txt.
Dataset load_dataset(const std::filesystem::path& dir);

std::string manifest_csv(const Manifest& manifest);
void write_manifest(const Manifest& manifest, const std::filesystem::path& csv_path);
/// Reads a manifest CSV; image paths resolve against `data_dir` and are
/// checked against its meta.txt when present.
Manifest read_manifest(const std::filesystem::path& csv_path, const std::filesystem::path& data_dir, Split split);

void write_image(const DatasetRecord& record, const std::filesystem::path& path);
DatasetRecord read_image(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace mdiqa
