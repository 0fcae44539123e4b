#pragma once

#include <string>
#include <vector>

#include "dipro/episode.hpp"

namespace dipro {

// Line-delimited cohort format (one JSON object per episode per line), plus a
// separate oracle sidecar holding the hidden generative factors. Schema in
// docs/episode-format.md. Round trips are lossless on the 64-bit values.
void write_cohort(const std::vector<Episode>& episodes, const std::string& path);
void write_oracle_sidecar(const std::vector<Episode>& episodes, const std::string& path);

// Reads model-visible fields; hidden_* stay empty unless a sidecar is merged.
std::vector<Episode> read_cohort(const std::string& path);

// Merge hidden factors from a sidecar into episodes matched by patient_id.
void merge_oracle_sidecar(std::vector<Episode>& episodes, const std::string& path);

}  // namespace dipro
