#pragma once

#include <map>
#include <string>
#include <vector>

#include "desta/adapter.hpp"

namespace desta {

// Single-file archive: magic "DSTACKP1", u32 header length, AdapterConfig
// JSON header, u32 tensor count, then per tensor a u32 name length, the
// name bytes, u32 ndims, u64 dims, and row-major little-endian f64 data.
// `extra` carries optimizer state for resumable training.
void save_checkpoint(const std::string& path, const AdapterConfig& config,
                     const AdapterParams& params,
                     const std::map<std::string, std::vector<double>>& extra = {});

struct Checkpoint {
  AdapterConfig config;
  AdapterParams params;
  std::map<std::string, std::vector<double>> extra;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace desta
