#include "mdiqa/config.hpp"

#include "mdiqa/errors.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

namespace mdiqa {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }

std::string fmt_list(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i)
            out += ", ";
        out += fmt(values[i]);
    }
    return out;
}

double to_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto t = trim(text);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty())
        throw ConfigError("config: key '" + key + "' expects a number, got '" + text + "'");
    return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    const auto t = trim(text);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty())
        throw ConfigError("config: key '" + key + "' expects a non-negative integer, got '" + text + "'");
    return v;
}

bool to_bool(const std::string& key, const std::string& text) {
    const auto t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on")
        return true;
    if (t == "false" || t == "0" || t == "no" || t == "off")
        return false;
    throw ConfigError("config: key '" + key + "' expects a boolean, got '" + text + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::istringstream is(text);
    for (std::string item; std::getline(is, item, ',');)
        out.push_back(to_double(key, item));
    if (out.empty())
        throw ConfigError("config: key '" + key + "' expects a comma-separated list");
    return out;
}

struct Key {
    const char* section;
    const char* name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;

    std::string full() const { return std::string(section) + "." + name; }
};

#define MDIQA_NUM(SEC, NAME, FIELD)                                                                                  \
    Key {                                                                                                            \
        SEC, #NAME, [](const RunConfig& c) { return fmt(c.FIELD); },                                                 \
            [](RunConfig& c, const std::string& v) { c.FIELD = to_double(SEC "." #NAME, v); }                        \
    }
#define MDIQA_UINT(SEC, NAME, FIELD)                                                                                 \
    Key {                                                                                                            \
        SEC, #NAME, [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.FIELD)); },                     \
            [](RunConfig& c, const std::string& v) { c.FIELD = to_uint(SEC "." #NAME, v); }                          \
    }
#define MDIQA_BOOL(SEC, NAME, FIELD)                                                                                 \
    Key {                                                                                                            \
        SEC, #NAME, [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); },                      \
            [](RunConfig& c, const std::string& v) { c.FIELD = to_bool(SEC "." #NAME, v); }                          \
    }

const std::vector<Key>& key_table() {
    static const std::vector<Key> keys = {
        MDIQA_NUM("codec", max_score, train.model.codec.max_score),
        MDIQA_UINT("codec", grid_size, train.model.codec.grid_size),
        Key{"codec", "scales", [](const RunConfig& c) { return fmt_list(c.train.model.codec.scales); },
            [](RunConfig& c, const std::string& v) { c.train.model.codec.scales = to_list("codec.scales", v); }},

        MDIQA_UINT("model", input_size, train.model.input_size),
        MDIQA_UINT("model", base_channels, train.model.base_channels),
        MDIQA_UINT("model", depth, train.model.depth),
        MDIQA_UINT("model", fused_channels, train.model.fused_channels),
        MDIQA_NUM("model", leaky_slope, train.model.leaky_slope),

        MDIQA_UINT("train", batch_size, train.batch_size),
        MDIQA_UINT("train", epochs, train.epochs),
        MDIQA_NUM("train", learning_rate, train.learning_rate),
        MDIQA_NUM("train", ema_alpha, train.ema_alpha),
        MDIQA_NUM("train", lambda1, train.lambda1),
        MDIQA_NUM("train", lambda2, train.lambda2),
        MDIQA_NUM("train", beta, train.beta),
        MDIQA_NUM("train", adam_beta1, train.adam_beta1),
        MDIQA_NUM("train", adam_beta2, train.adam_beta2),
        MDIQA_NUM("train", adam_eps, train.adam_eps),
        MDIQA_NUM("train", kl_eps, train.kl_eps),
        Key{"train", "kl_direction",
            [](const RunConfig& c) {
                return std::string(c.train.kl_direction == KlDirection::TargetToPrediction ? "target_pred"
                                                                                            : "pred_target");
            },
            [](RunConfig& c, const std::string& v) {
                const auto t = trim(v);
                if (t == "target_pred")
                    c.train.kl_direction = KlDirection::TargetToPrediction;
                else if (t == "pred_target")
                    c.train.kl_direction = KlDirection::PredictionToTarget;
                else
                    throw ConfigError("config: key 'train.kl_direction' expects target_pred or pred_target");
            }},
        MDIQA_BOOL("train", consistency, train.consistency),
        MDIQA_NUM("train", warmup_iterations, train.warmup_iterations),
        MDIQA_NUM("train", warmup_target, train.warmup_target),
        MDIQA_BOOL("train", augment, train.augment),
        MDIQA_UINT("train", ensemble_size, train.ensemble_size),
        Key{"train", "joint_init",
            [](const RunConfig& c) {
                return std::string(c.train.joint_init == JointInit::Fresh ? "fresh" : "checkpoint");
            },
            [](RunConfig& c, const std::string& v) {
                const auto t = trim(v);
                if (t == "fresh")
                    c.train.joint_init = JointInit::Fresh;
                else if (t == "checkpoint")
                    c.train.joint_init = JointInit::FromCheckpoint;
                else
                    throw ConfigError("config: key 'train.joint_init' expects fresh or checkpoint");
            }},
        MDIQA_UINT("train", max_iterations, train.max_iterations),

        MDIQA_UINT("data", image_size, data.image_size),
        MDIQA_UINT("data", n_labeled, data.n_labeled),
        MDIQA_UINT("data", n_unlabeled, data.n_unlabeled),
        MDIQA_NUM("data", max_score, data.max_score),
        MDIQA_NUM("data", score_step, data.score_step),
        MDIQA_NUM("data", sigma_max, data.sigma_max),
        Key{"data", "noise_map",
            [](const RunConfig& c) { return std::string(c.data.noise_map == NoiseMap::Linear ? "linear" : "gamma"); },
            [](RunConfig& c, const std::string& v) {
                const auto t = trim(v);
                if (t == "linear")
                    c.data.noise_map = NoiseMap::Linear;
                else if (t == "gamma")
                    c.data.noise_map = NoiseMap::Gamma;
                else
                    throw ConfigError("config: key 'data.noise_map' expects linear or gamma");
            }},
        MDIQA_NUM("data", noise_gamma, data.noise_gamma),
        MDIQA_NUM("data", blur_sigma, data.blur_sigma),
        Key{"data", "split_ratios", [](const RunConfig& c) { return fmt_list(c.data.split_ratios); },
            [](RunConfig& c, const std::string& v) { c.data.split_ratios = to_list("data.split_ratios", v); }},

        MDIQA_UINT("run", seed, seed),
        MDIQA_UINT("run", workers, workers),
    };
    return keys;
}

#undef MDIQA_NUM
#undef MDIQA_UINT
#undef MDIQA_BOOL

} // namespace

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            const auto& keys = key_table();
            if (std::none_of(keys.begin(), keys.end(), [&](const Key& k) { return section == k.section; }))
                throw ConfigError("config line " + std::to_string(line_no) + ": unknown section '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        if (section.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": key outside of a section");
        cfg.set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    try {
        return parse(read_text_file(path));
    } catch (const NotFoundError& e) {
        throw IoError(std::string("config: ") + e.what());
    }
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
    for (const auto& k : key_table())
        if (section == k.section && key == k.name) {
            k.set(*this, value);
            return;
        }
    throw ConfigError("config: unknown key '" + section + "." + key + "'");
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("config override '" + assignment + "' must look like section.key=value");
    set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
        trim(assignment.substr(eq + 1)));
}

void RunConfig::finalize() {
    data.seed = seed;
    train.seed = seed;
    data.workers = workers;
    train.workers = workers;
    if (workers == 0)
        throw ConfigError("config: run.workers must be at least 1");
    if (data.image_size != train.model.input_size)
        throw ConfigError("config: data.image_size (" + std::to_string(data.image_size) +
                          ") must equal model.input_size (" + std::to_string(train.model.input_size) + ")");
    if (data.max_score != train.model.codec.max_score)
        throw ConfigError("config: data.max_score must equal codec.max_score");
    try {
        data.validate();
        train.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
}

std::string RunConfig::to_text() const {
    std::string out;
    std::string section;
    for (const auto& k : key_table()) {
        if (section != k.section) {
            section = k.section;
            out += (out.empty() ? "[" : "\n[") + section + "]\n";
        }
        out += std::string(k.name) + " = " + k.get(*this) + "\n";
    }
    return out;
}

std::vector<std::string> RunConfig::known_keys() {
    std::vector<std::string> out;
    for (const auto& k : key_table())
        out.push_back(k.full());
    return out;
}

} // namespace mdiqa
