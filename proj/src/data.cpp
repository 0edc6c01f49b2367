#include "mdiqa/data.hpp"

#include "mdiqa/errors.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

namespace mdiqa {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kLabeledStream = 0;
constexpr std::uint64_t kUnlabeledStream = 1;
constexpr std::uint64_t kSplitStream = 2;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& context) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw IntegrityError(context + ": cannot parse number '" + text + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ','))
        out.push_back(field);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

std::vector<double> gaussian_blur(const std::vector<double>& img, std::size_t side, double sigma) {
    if (!(sigma > 0.0))
        return img;
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = w;
        total += w;
    }
    for (auto& w : kernel)
        w /= total;
    const auto n = static_cast<std::ptrdiff_t>(side);
    auto clampi = [n](std::ptrdiff_t v) { return std::clamp<std::ptrdiff_t>(v, 0, n - 1); };
    std::vector<double> tmp(img.size()), out(img.size());
    for (std::ptrdiff_t y = 0; y < n; ++y)
        for (std::ptrdiff_t x = 0; x < n; ++x) {
            double s = 0.0;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i)
                s += kernel[static_cast<std::size_t>(i + radius)] *
                     img[static_cast<std::size_t>(y * n + clampi(x + i))];
            tmp[static_cast<std::size_t>(y * n + x)] = s;
        }
    for (std::ptrdiff_t y = 0; y < n; ++y)
        for (std::ptrdiff_t x = 0; x < n; ++x) {
            double s = 0.0;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i)
                s += kernel[static_cast<std::size_t>(i + radius)] *
                     tmp[static_cast<std::size_t>(clampi(y + i) * n + x)];
            out[static_cast<std::size_t>(y * n + x)] = s;
        }
    return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string record_id(char prefix, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%c%05zu", prefix, index);
    return buf;
}

DatasetRecord make_record(const SyntheticConfig& cfg, std::uint64_t stream, std::size_t index) {
    auto rng = image_rng(cfg.seed, stream, index);
    std::uniform_int_distribution<std::size_t> grid(0, cfg.grid_points() - 1);
    const double score = cfg.grid_score(grid(rng));
    const auto clean = render_phantom(cfg.image_size, cfg.blur_sigma, rng);
    DatasetRecord r;
    r.side = cfg.image_size;
    r.pixels = add_noise(clean, noise_sigma(score, cfg), rng);
    if (stream == kLabeledStream) {
        r.id = record_id('L', index);
        r.score = score;
        r.origin = Origin::Labeled;
    } else {
        r.id = record_id('U', index);
        r.origin = Origin::Unlabeled;
    }
    return r;
}

std::vector<DatasetRecord> generate_stream(const SyntheticConfig& cfg, std::uint64_t stream, std::size_t count) {
    std::vector<DatasetRecord> out(count);
    const auto workers = std::max<std::size_t>(1, std::min(cfg.workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i)
            out[i] = make_record(cfg, stream, i);
        return out;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers)
                out[i] = make_record(cfg, stream, i);
        });
    for (auto& t : pool)
        t.join();
    return out;
}

fs::path image_relpath(const std::string& id) { return fs::path("images") / (id + ".f64"); }

std::uint64_t file_hash(const fs::path& path) {
    const auto text = read_text_file(path);
    return fnv1a(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::map<std::string, std::string> read_checksums(const fs::path& meta_path) {
    std::map<std::string, std::string> sums;
    std::istringstream is(read_text_file(meta_path));
    std::string line;
    while (std::getline(is, line)) {
        if (!line.starts_with("checksum "))
            continue;
        std::istringstream ls(line.substr(9));
        std::string path, hash;
        ls >> path >> hash;
        sums[path] = hash;
    }
    return sums;
}

void verify(const fs::path& dir, const std::string& rel, const std::map<std::string, std::string>& sums) {
    const auto it = sums.find(rel);
    if (it == sums.end())
        throw IntegrityError("dataset: no checksum recorded for " + rel);
    const auto path = dir / rel;
    if (!fs::exists(path))
        throw NotFoundError("dataset: missing file " + path.string());
    if (hex64(file_hash(path)) != it->second)
        throw IntegrityError("dataset: checksum mismatch for " + rel);
}

} // namespace

std::string to_string(Origin origin) {
    switch (origin) {
    case Origin::Labeled:
        return "labeled";
    case Origin::Unlabeled:
        return "unlabeled";
    case Origin::Pseudo:
        return "pseudo";
    }
    return "?";
}

std::string to_string(Split split) {
    switch (split) {
    case Split::Train:
        return "train";
    case Split::Val:
        return "val";
    case Split::Test:
        return "test";
    case Split::Unlabeled:
        return "unlabeled";
    case Split::Pseudo:
        return "pseudo";
    }
    return "?";
}

Origin parse_origin(const std::string& text) {
    if (text == "labeled")
        return Origin::Labeled;
    if (text == "unlabeled")
        return Origin::Unlabeled;
    if (text == "pseudo")
        return Origin::Pseudo;
    throw IntegrityError("manifest: unknown origin '" + text + "'");
}

std::size_t SyntheticConfig::grid_points() const {
    return static_cast<std::size_t>(std::llround(max_score / score_step)) + 1;
}

double SyntheticConfig::grid_score(std::size_t i) const {
    const auto steps = static_cast<double>(grid_points() - 1);
    return static_cast<double>(i) * max_score / steps;
}

void SyntheticConfig::validate() const {
    if (image_size < 16)
        throw ConfigError("data: image_size must be at least 16");
    if (!(max_score > 0.0) || !(score_step > 0.0))
        throw ConfigError("data: max_score and score_step must be positive");
    const double steps = max_score / score_step;
    if (std::abs(steps - std::round(steps)) > 1e-9)
        throw ConfigError("data: score_step must divide max_score evenly");
    if (!(sigma_max >= 0.0) || !(blur_sigma >= 0.0) || !(noise_gamma > 0.0))
        throw ConfigError("data: noise parameters must be non-negative");
    if (split_ratios.size() != 3)
        throw ConfigError("data: split_ratios needs three entries (train, val, test)");
    for (double r : split_ratios)
        if (!(r >= 0.0))
            throw ConfigError("data: split ratios must be non-negative");
    if (std::abs(std::accumulate(split_ratios.begin(), split_ratios.end(), 0.0) - 1.0) > 1e-9)
        throw ConfigError("data: split ratios must sum to 1");
}

double noise_sigma(double score, const SyntheticConfig& cfg) {
    const double badness = std::clamp(1.0 - score / cfg.max_score, 0.0, 1.0);
    const double shaped = cfg.noise_map == NoiseMap::Linear ? badness : std::pow(badness, cfg.noise_gamma);
    return cfg.sigma_max * shaped;
}

std::mt19937_64 image_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return std::mt19937_64(splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream));
}

std::vector<double> render_phantom(std::size_t side, double blur_sigma, std::mt19937_64& rng) {
    constexpr double kBackground = 0.25;
    constexpr double kBody = 0.4;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> count_dist(4, 8);

    const double n = static_cast<double>(side);
    const double c = (n - 1.0) / 2.0;
    const double body_radius = 0.42 * n;
    std::vector<double> img(side * side, kBackground);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
            if (dx * dx + dy * dy <= body_radius * body_radius)
                img[y * side + x] = kBody;
        }

    const int ellipses = count_dist(rng);
    for (int e = 0; e < ellipses; ++e) {
        const double r = 0.3 * n * std::sqrt(unit(rng));
        const double phi = 2.0 * std::numbers::pi * unit(rng);
        const double cx = c + r * std::cos(phi), cy = c + r * std::sin(phi);
        const double a = n * (0.05 + 0.15 * unit(rng));
        const double b = n * (0.05 + 0.15 * unit(rng));
        const double theta = std::numbers::pi * unit(rng);
        const double intensity = 0.45 + 0.3 * unit(rng);
        const double ct = std::cos(theta), st = std::sin(theta);
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x) {
                const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
                const double u = (dx * ct + dy * st) / a, v = (-dx * st + dy * ct) / b;
                if (u * u + v * v <= 1.0)
                    img[y * side + x] = intensity;
            }
    }
    return gaussian_blur(img, side, blur_sigma);
}

std::vector<double> add_noise(std::span<const double> clean, double sigma, std::mt19937_64& rng) {
    std::vector<double> out(clean.begin(), clean.end());
    if (sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, sigma);
        for (auto& v : out)
            v += noise(rng);
    }
    for (auto& v : out)
        v = std::clamp(v, 0.0, 1.0);
    return out;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    auto labeled = generate_stream(cfg, kLabeledStream, cfg.n_labeled);
    auto parts = split(std::move(labeled), cfg.split_ratios, derive_seed(cfg.seed, kSplitStream));
    Dataset ds;
    ds.train.records = std::move(parts[0]);
    ds.val.records = std::move(parts[1]);
    ds.test.records = std::move(parts[2]);
    ds.unlabeled.records = generate_stream(cfg, kUnlabeledStream, cfg.n_unlabeled);
    return ds;
}

std::vector<std::vector<DatasetRecord>> split(std::vector<DatasetRecord> records, std::span<const double> ratios,
                                              std::uint64_t seed) {
    if (ratios.empty())
        throw DomainError("split: no ratios given");
    double total = 0.0;
    for (double r : ratios) {
        if (!(r >= 0.0))
            throw DomainError("split: ratios must be non-negative");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw DomainError("split: ratios must sum to 1");

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<DatasetRecord>> parts(ratios.size());
    const auto n = records.size();
    std::size_t begin = 0;
    double cumulative = 0.0;
    for (std::size_t p = 0; p < ratios.size(); ++p) {
        cumulative += ratios[p];
        const std::size_t end =
            p + 1 == ratios.size() ? n
                                   : std::min(n, static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(n))));
        for (std::size_t i = begin; i < end; ++i)
            parts[p].push_back(std::move(records[order[i]]));
        begin = std::max(begin, end);
    }
    return parts;
}

std::uint64_t fnv1a(std::span<const unsigned char> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw NotFoundError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out)
        throw IoError("write failed for " + path.string());
}

std::string Manifest::checksum() const {
    const auto csv = manifest_csv(*this);
    return hex64(fnv1a(std::span(reinterpret_cast<const unsigned char*>(csv.data()), csv.size())));
}

std::string manifest_csv(const Manifest& manifest) {
    std::string out = "id,path,score,origin\n";
    for (const auto& r : manifest.records) {
        out += r.id;
        out += ',';
        out += image_relpath(r.id).generic_string();
        out += ',';
        if (r.score)
            out += format_double(*r.score);
        out += ',';
        out += to_string(r.origin);
        out += '\n';
    }
    return out;
}

void write_manifest(const Manifest& manifest, const fs::path& csv_path) {
    write_text_file(csv_path, manifest_csv(manifest));
}

void write_image(const DatasetRecord& record, const fs::path& path) {
    if (record.pixels.size() != record.side * record.side)
        throw DomainError("image " + record.id + ": pixel count does not match side");
    std::string text = "MDIQIMG 1\nid " + record.id + "\ndims " + std::to_string(record.side) + " " +
                       std::to_string(record.side) + "\n";
    const auto header = text.size();
    text.resize(header + record.pixels.size() * sizeof(double));
    std::memcpy(text.data() + header, record.pixels.data(), record.pixels.size() * sizeof(double));
    write_text_file(path, text);
}

DatasetRecord read_image(const fs::path& path) {
    const auto text = read_text_file(path);
    std::istringstream is(text);
    std::string magic, version, id_key, dims_key;
    DatasetRecord r;
    std::size_t h = 0, w = 0;
    if (!(is >> magic >> version) || magic != "MDIQIMG" || version != "1")
        throw IntegrityError("image " + path.string() + ": bad header");
    if (!(is >> id_key >> r.id) || id_key != "id" || !(is >> dims_key >> h >> w) || dims_key != "dims" || h != w)
        throw IntegrityError("image " + path.string() + ": bad header fields");
    is.get(); // newline ending the header
    const auto offset = static_cast<std::size_t>(is.tellg());
    r.side = h;
    r.pixels.resize(h * w);
    if (text.size() != offset + r.pixels.size() * sizeof(double))
        throw IntegrityError("image " + path.string() + ": payload size mismatch");
    std::memcpy(r.pixels.data(), text.data() + offset, r.pixels.size() * sizeof(double));
    for (double v : r.pixels)
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw IntegrityError("image " + path.string() + ": pixel outside [0,1]");
    return r;
}

void save_dataset(const Dataset& dataset, const fs::path& dir, const std::string& config_echo) {
    std::error_code ec;
    fs::create_directories(dir / "images", ec);
    fs::create_directories(dir / "manifests", ec);
    if (ec)
        throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());

    std::string meta = "mdiqa-dataset 1\n";
    std::istringstream echo(config_echo);
    for (std::string line; std::getline(echo, line);)
        meta += "echo " + line + "\n";

    for (const Manifest* m : {&dataset.train, &dataset.val, &dataset.test, &dataset.unlabeled}) {
        const auto rel = (fs::path("manifests") / (to_string(m->split) + ".csv")).generic_string();
        const auto csv = manifest_csv(*m);
        write_text_file(dir / rel, csv);
        meta += "count " + to_string(m->split) + " " + std::to_string(m->size()) + "\n";
        meta += "checksum " + rel + " " +
                hex64(fnv1a(std::span(reinterpret_cast<const unsigned char*>(csv.data()), csv.size()))) + "\n";
    }
    for (const Manifest* m : {&dataset.train, &dataset.val, &dataset.test, &dataset.unlabeled})
        for (const auto& r : m->records) {
            const auto rel = image_relpath(r.id);
            write_image(r, dir / rel);
            meta += "checksum " + rel.generic_string() + " " + hex64(file_hash(dir / rel)) + "\n";
        }
    write_text_file(dir / "meta.txt", meta);
}

Manifest read_manifest(const fs::path& csv_path, const fs::path& data_dir, Split split) {
    std::map<std::string, std::string> sums;
    if (fs::exists(data_dir / "meta.txt"))
        sums = read_checksums(data_dir / "meta.txt");

    std::istringstream is(read_text_file(csv_path));
    std::string line;
    if (!std::getline(is, line) || line != "id,path,score,origin")
        throw IntegrityError("manifest " + csv_path.string() + ": bad header");
    Manifest m;
    m.split = split;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty())
            continue;
        const auto fields = split_csv_line(line);
        const auto where = csv_path.string() + ":" + std::to_string(line_no);
        if (fields.size() != 4)
            throw IntegrityError("manifest " + where + ": expected 4 fields");
        if (!sums.empty())
            verify(data_dir, fields[1], sums);
        const auto image_path = data_dir / fields[1];
        if (!fs::exists(image_path))
            throw NotFoundError("manifest " + where + ": missing image " + image_path.string());
        auto r = read_image(image_path);
        if (r.id != fields[0])
            throw IntegrityError("manifest " + where + ": image id " + r.id + " does not match " + fields[0]);
        if (!fields[2].empty())
            r.score = parse_double(fields[2], "manifest " + where);
        r.origin = parse_origin(fields[3]);
        m.records.push_back(std::move(r));
    }
    return m;
}

Dataset load_dataset(const fs::path& dir) {
    const auto meta_path = dir / "meta.txt";
    if (!fs::exists(meta_path))
        throw NotFoundError("dataset: missing " + meta_path.string());
    const auto sums = read_checksums(meta_path);
    Dataset ds;
    for (Manifest* m : {&ds.train, &ds.val, &ds.test, &ds.unlabeled}) {
        const auto split = m->split;
        const auto rel = (fs::path("manifests") / (to_string(split) + ".csv")).generic_string();
        verify(dir, rel, sums);
        *m = read_manifest(dir / rel, dir, split);
    }
    return ds;
}

} // namespace mdiqa
