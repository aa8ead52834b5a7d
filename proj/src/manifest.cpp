#include "tkg/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "json.hpp"
#include "tkg/error.hpp"

namespace tkg {

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const unsigned char* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

namespace {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void RunManifest::add_input(const std::string& path) {
  input_digests[path] = hex64(fnv1a64_file(path));
}

void RunManifest::stamp_start() { started_at = now_iso8601(); }
void RunManifest::stamp_finish() { finished_at = now_iso8601(); }

void RunManifest::write(const std::string& path) const {
  nlohmann::ordered_json j;
  j["tool"] = kToolVersion;
  j["command"] = command;
  if (!config_json.empty()) {
    j["config"] = nlohmann::json::parse(config_json, nullptr, false);
  }
  j["inputs"] = input_digests;
  j["seeds"] = seeds;
  j["startedAt"] = started_at;
  j["finishedAt"] = finished_at;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace tkg
