#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dipro/config.hpp"
#include "dipro/params.hpp"

namespace dipro {

// Versioned binary parameter container; byte layout in
// docs/checkpoint-format.md. Values are 64-bit little-endian; the full config
// text rides along so a checkpoint alone can rebuild its model.
struct LoadedCheckpoint {
    std::uint32_t format_version = 0;
    std::uint64_t config_hash = 0;
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> params;  // values only, no graph
};

void save_checkpoint(const std::string& path, const ExperimentConfig& config,
                     const ParamStore& params);

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copy values from a loaded checkpoint into a live store; name and shape
// manifests must match exactly.
void restore_params(ParamStore& store, const LoadedCheckpoint& ckpt);

// Snapshot/restore in memory (best-epoch retention during training).
std::vector<std::vector<double>> snapshot_values(const ParamStore& store);
void restore_values(ParamStore& store, const std::vector<std::vector<double>>& snapshot);

}  // namespace dipro
