#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "davss/synthgen.hpp"
#include "davss/trainer.hpp"

namespace davss {

/// Everything one experiment needs, mirrored 1:1 by the JSON config file.
/// A single root seed drives dataset geometry, initialization, sampling and
/// class selection through derived streams.
struct RunConfig {
    std::uint64_t seed = 1;
    std::filesystem::path dataset_root = "data";
    std::filesystem::path run_dir = "runs/default";
    WorldSpec world = default_world();
    DomainStyle source_style = default_source_style();
    DomainStyle target_style = default_target_style();
    int n_source = 200;
    int n_target = 200;
    double eval_fraction = 0.2;
    TrainConfig train;
};

RunConfig default_run_config();
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_json(const RunConfig& cfg);

/// Propagates cfg.seed into the derived world/trainer/mixer seeds.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

std::string config_hash(const RunConfig& cfg);

/// Written at the end of a successful CLI run; records what the run produced.
void write_run_manifest(const std::filesystem::path& run_dir, const RunConfig& cfg,
                        const std::vector<std::string>& outputs, const std::string& tool_version);

inline std::filesystem::path pseudo_dir_for(const RunConfig& cfg) {
    return cfg.dataset_root / "pseudo";
}

}  // namespace davss
