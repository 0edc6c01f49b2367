#include "mdiqa/checkpoint.hpp"

#include "mdiqa/config.hpp"
#include "mdiqa/data.hpp"
#include "mdiqa/errors.hpp"

#include <cstring>
#include <map>

namespace mdiqa {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'I', 'Q'};

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_tensor(std::string& out, const std::string& name, const Shape& shape, std::span<const double> values) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape)
        put<std::uint64_t>(out, d);
    const auto* bytes = reinterpret_cast<const char*>(values.data());
    out.append(bytes, values.size() * sizeof(double));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::vector<double> get_doubles(std::size_t n) {
        if (n > (bytes_.size() - pos_) / sizeof(double))
            throw IntegrityError("checkpoint: truncated tensor payload");
        std::vector<double> v(n);
        std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            throw IntegrityError("checkpoint: unexpected end of file");
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

struct RawTensor {
    Shape shape;
    std::vector<double> values;
};

} // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    const auto& params = ckpt.model.parameters();
    if (ckpt.ema.size() != params.size() || ckpt.adam_m.size() != params.size() ||
        ckpt.adam_v.size() != params.size())
        throw ContractError("checkpoint: EMA/optimizer state does not mirror the parameters");
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, ckpt.config_text.size());
    out += ckpt.config_text;
    const double iteration = static_cast<double>(ckpt.iteration);
    put_tensor(out, "state/iteration", {}, std::span(&iteration, 1));
    for (const auto& p : params)
        put_tensor(out, "param/" + p.name, p.tensor.shape(), p.tensor.values());
    for (std::size_t i = 0; i < params.size(); ++i)
        put_tensor(out, "ema/" + params[i].name, ckpt.ema[i].shape(), ckpt.ema[i].values());
    for (std::size_t i = 0; i < params.size(); ++i)
        put_tensor(out, "adam_m/" + params[i].name, params[i].tensor.shape(), ckpt.adam_m[i]);
    for (std::size_t i = 0; i < params.size(); ++i)
        put_tensor(out, "adam_v/" + params[i].name, params[i].tensor.shape(), ckpt.adam_v[i]);
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (in.get_string(4) != std::string(kMagic, 4))
        throw IntegrityError("checkpoint: bad magic");
    const auto version = in.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw IntegrityError("checkpoint: unsupported version " + std::to_string(version));
    const auto config_len = in.get<std::uint64_t>();
    std::string config_text = in.get_string(config_len);

    std::map<std::string, RawTensor> tensors;
    while (!in.done()) {
        const auto name = in.get_string(in.get<std::uint32_t>());
        RawTensor t;
        const auto rank = in.get<std::uint32_t>();
        for (std::uint32_t r = 0; r < rank; ++r)
            t.shape.push_back(in.get<std::uint64_t>());
        t.values = in.get_doubles(shape_numel(t.shape));
        if (!tensors.emplace(name, std::move(t)).second)
            throw IntegrityError("checkpoint: duplicate tensor '" + name + "'");
    }

    RunConfig cfg;
    try {
        cfg = RunConfig::parse(config_text);
    } catch (const ConfigError& e) {
        throw IntegrityError(std::string("checkpoint: embedded config unreadable: ") + e.what());
    }
    Checkpoint ckpt{QualityModel(cfg.train.model), {}, {}, {}, 0, std::move(config_text), {}};

    auto take = [&](const std::string& name, const Shape& expected) {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw IntegrityError("checkpoint: missing tensor '" + name + "'");
        if (it->second.shape != expected)
            throw IntegrityError("checkpoint: tensor '" + name + "' has shape " + shape_str(it->second.shape) +
                                 ", expected " + shape_str(expected));
        auto values = std::move(it->second.values);
        tensors.erase(it);
        return values;
    };

    const auto iteration = take("state/iteration", {});
    ckpt.iteration = static_cast<std::uint64_t>(iteration[0]);
    for (auto& p : ckpt.model.parameters()) {
        const auto shape = p.tensor.shape();
        p.tensor = Tensor::from(shape, take("param/" + p.name, shape), true);
        ckpt.ema.push_back(Tensor::from(shape, take("ema/" + p.name, shape), false));
        ckpt.adam_m.push_back(take("adam_m/" + p.name, shape));
        ckpt.adam_v.push_back(take("adam_v/" + p.name, shape));
    }
    if (!tensors.empty())
        throw IntegrityError("checkpoint: unexpected tensor '" + tensors.begin()->first + "'");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_text_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_text_file(path)); }

} // namespace mdiqa
