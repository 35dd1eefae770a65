#include "agopbench/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "agopbench/errors.hpp"
#include "binio.hpp"

namespace agopbench {

std::string sha256_hex(const void* data, std::size_t len) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  if (EVP_Digest(data, len, md, &md_len, EVP_sha256(), nullptr) != 1) {
    throw StateError("sha256 digest failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * md_len);
  for (unsigned int i = 0; i < md_len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  const std::string buf = binio::read_file(path);
  return sha256_hex(buf.data(), buf.size());
}

std::string iso8601_utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void append_manifest(const std::string& run_dir, ManifestEntry entry) {
  if (entry.timestamp.empty()) entry.timestamp = iso8601_utc_now();
  nlohmann::json j;
  j["command"] = entry.command;
  j["seeds"] = entry.seeds;
  j["inputs"] = entry.inputs;
  j["outputs"] = entry.outputs;
  j["version"] = entry.version;
  j["timestamp"] = entry.timestamp;
  const std::filesystem::path path = std::filesystem::path(run_dir) / "manifest.jsonl";
  std::ofstream f(path, std::ios::app);
  if (!f) throw IoError("cannot open " + path.string() + " for appending");
  f << j.dump() << '\n';
  if (!f) throw IoError("write failure on " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::string& run_dir) {
  const std::filesystem::path path = std::filesystem::path(run_dir) / "manifest.jsonl";
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest " + path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
    ManifestEntry e;
    e.command = j.value("command", "");
    e.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    e.inputs = j.value("inputs", std::map<std::string, std::string>{});
    e.outputs = j.value("outputs", std::map<std::string, std::string>{});
    e.version = j.value("version", "");
    e.timestamp = j.value("timestamp", "");
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace agopbench
