#pragma once

#include <iosfwd>
#include <string>

#include "eslm/config.hpp"

namespace eslm {

// Orchestrates a full training run from a resolved config: ingest the
// corpus, initialize or resume parameters, iterate ES steps, and persist
// metrics plus checkpoints under the output directory.
//
// Artifacts: resolved_config.json, metrics.csv (one row per iteration,
// appended and flushed per step), checkpoint_NNNNNN.ckpt at the configured
// cadence, checkpoint_final.ckpt at the end. If the directory already holds
// checkpoints for this config, the run resumes after the newest one and the
// continuation is identical to an uninterrupted run.
//
// Returns 0 on success. On a numerical error the last good parameters are
// checkpointed and 1 is returned.
int run(const RunConfig& config, std::ostream& log);

// Effective output directory: the ESLM_OUTPUT_DIR environment variable
// overrides the config value when set.
std::string resolve_output_dir(const RunConfig& config);

}  // namespace eslm
