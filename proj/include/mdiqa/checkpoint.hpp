#pragma once

#include "mdiqa/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mdiqa {

struct TraceRow {
    std::uint64_t iteration = 0;
    double l_sup = 0.0;
    double l_pseudo = 0.0;
    double l_cons = 0.0;
    double lambda3 = 0.0;
};

/// Trained state: student parameters, EMA shadow, Adam moments and the
/// config that produced them. The trace is written separately as CSV.
struct Checkpoint {
    QualityModel model;
    std::vector<Tensor> ema;
    std::vector<std::vector<double>> adam_m;
    std::vector<std::vector<double>> adam_v;
    std::uint64_t iteration = 0;
    std::string config_text;
    std::vector<TraceRow> trace;
};

constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (all integers and floats little-endian):
///   "MDIQ" | u32 version | u64 config_len | config bytes (UTF-8)
///   then, until end of file, one record per tensor:
///   u32 name_len | name | u32 rank | u64 dims[rank] | f64 values[prod(dims)]
/// Tensor names: "param/<p>", "ema/<p>", "adam_m/<p>", "adam_v/<p>" and the
/// scalar "state/iteration".
std::string serialize_checkpoint(const Checkpoint& ckpt);
/// The embedded config text rebuilds the architecture the tensors load into.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace mdiqa
