#include "desta/run_manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "desta/error.hpp"

namespace desta {

void write_run_manifest(const RunManifest& manifest, const std::string& path) {
  nlohmann::json j;
  j["stage"] = manifest.stage;
  j["tool_version"] = manifest.tool_version;
  j["config_digest"] = manifest.config_digest;
  j["inputs"] = manifest.inputs;
  j["outputs"] = manifest.outputs;
  j["extra"] = manifest.extra;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write run manifest: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace desta
