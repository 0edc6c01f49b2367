#pragma once

#include "mdiqa/data.hpp"
#include "mdiqa/trainer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mdiqa {

/// Everything a CLI run needs, read from a `key = value` text file with
/// [codec], [model], [train], [data] and [run] sections. Unknown sections or
/// keys are rejected with a ConfigError naming the offender. Every key has a
/// default, so an empty file is a valid config.
struct RunConfig {
    SyntheticConfig data;
    TrainConfig train; ///< carries model and codec
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);

    /// `section.key=value`
    void apply_override(const std::string& assignment);
    void set(const std::string& section, const std::string& key, const std::string& value);

    /// Pushes run-level seed/workers into the data and train blocks and checks
    /// cross-section consistency.
    void finalize();

    /// Full echo of every key, parseable by `parse`.
    std::string to_text() const;

    static std::vector<std::string> known_keys();
};

} // namespace mdiqa
