#pragma once

#include <string>
#include <vector>

#include "tcasr/optim.hpp"

namespace tcasr {

struct ParamRecord {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

// Little-endian binary checkpoint: magic "TCASR1", uint32 parameter count,
// then per parameter: uint32 name length, UTF-8 name, uint32 rank,
// uint32 dims, float64 values. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ParamStore& params);
std::vector<ParamRecord> load_checkpoint(const std::string& path);

// Copies loaded values into a matching param store; checkpoint error on
// any missing name or shape mismatch.
void apply_records(const std::vector<ParamRecord>& records, ParamStore& params);

// Arithmetic mean of each parameter across checkpoint files.
std::vector<ParamRecord> average_checkpoints(const std::vector<std::string>& paths);

}  // namespace tcasr
