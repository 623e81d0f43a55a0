#include "pfkit/manifest.hpp"

#include <ctime>

#include <json.hpp>

namespace pfkit {

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void write_manifest(const RunManifest& m, const std::string& path) {
  nlohmann::json j;
  j["command"] = m.command;
  j["tool_version"] = m.tool_version;
  j["timestamp"] = m.timestamp.empty() ? utc_timestamp() : m.timestamp;
  j["hashes"] = m.hashes;
  j["params"] = m.params;
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace pfkit
