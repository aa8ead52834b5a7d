#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tkg {

inline constexpr const char* kToolVersion = "tkgo 0.1.0";

// 64-bit FNV-1a over a byte string / file contents.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64_file(const std::string& path);

// Audit record written next to every command's outputs: config snapshot,
// input digests, seeds, tool version, wall-clock bounds. Written once at
// start and finalized at exit.
struct RunManifest {
  std::string command;
  std::string config_json;  // serialized config/flag snapshot
  std::map<std::string, std::string> input_digests;  // path -> hex digest
  std::vector<std::uint64_t> seeds;
  std::string started_at;
  std::string finished_at;

  void add_input(const std::string& path);
  void write(const std::string& path) const;
  void stamp_start();
  void stamp_finish();
};

}  // namespace tkg
