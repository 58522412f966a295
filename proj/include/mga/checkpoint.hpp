#pragma once

// Binary checkpoint container, little-endian:
//   8 bytes  magic "MGACKPT\0"
//   u32      format version (1)
//   u64 + n  run config text (key = value lines)
//   u64      block count, then per block:
//              u64 + n name, u64 rank, rank x u64 dims, prod(dims) x f64
//   u64      optimizer step
//   per block: prod(dims) x f64 first moment, then prod(dims) x f64 second moment

#include <cstdint>
#include <iosfwd>
#include <string>

#include "mga/config.hpp"
#include "mga/model.hpp"
#include "mga/training.hpp"

namespace mga {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::string config_text;
  ParamStore params;
  OptimizerState optimizer;
};

void write_checkpoint(std::ostream& out, const RunConfig& config, const ParamStore& params,
                      const OptimizerState& optimizer);
void save_checkpoint(const std::string& path, const RunConfig& config, const ParamStore& params,
                     const OptimizerState& optimizer);

/// Throws InvalidInput on a bad magic, an unsupported version or truncation.
Checkpoint read_checkpoint(std::istream& in, const std::string& source);
Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds the model described by the checkpoint config and copies every
/// stored block into it; block names and shapes must match exactly.
Model restore_model(const Checkpoint& ckpt);

}  // namespace mga
