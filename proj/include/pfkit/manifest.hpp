#pragma once

#include <map>
#include <string>

#include "pfkit/common.hpp"

namespace pfkit {

// Provenance record written next to every produced artifact: the exact
// command, content hashes of inputs/outputs, and the seeds involved, so
// deterministic stages can be replayed bit-exactly.
struct RunManifest {
  std::string command;
  std::string tool_version = kVersion;
  std::string timestamp;                       // UTC, ISO 8601
  std::map<std::string, std::string> hashes;   // artifact name -> content hash
  std::map<std::string, std::string> params;   // flags, seeds, presets
};

std::string utc_timestamp();
void write_manifest(const RunManifest& m, const std::string& path);

}  // namespace pfkit
