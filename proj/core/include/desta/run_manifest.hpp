#pragma once

#include <map>
#include <string>

namespace desta {

// Every pipeline stage drops one of these next to its outputs: enough to
// re-run the stage bit-identically given warm caches.
struct RunManifest {
  std::string stage;
  std::string tool_version;
  std::string config_digest;                  // sha256 of the effective config
  std::map<std::string, std::string> inputs;  // path -> sha256
  std::map<std::string, std::string> outputs; // path -> sha256
  std::map<std::string, std::string> extra;   // seeds, counts, free-form
};

void write_run_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace desta
