#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace agopbench {

inline constexpr const char* kToolVersion = "1.0.0";

/// One pipeline stage's provenance record, appended to the run directory's
/// manifest.jsonl. Inputs let a later reader check that a stage consumed
/// exactly what an earlier stage produced.
struct ManifestEntry {
  std::string command;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::string version = kToolVersion;
  std::string timestamp;  // ISO 8601 UTC; filled by append_manifest if empty
};

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_file(const std::string& path);

std::string iso8601_utc_now();

/// Appends one JSON line to <run_dir>/manifest.jsonl, creating it if needed.
void append_manifest(const std::string& run_dir, ManifestEntry entry);

/// Parses every line of a manifest.jsonl back into entries.
std::vector<ManifestEntry> read_manifest(const std::string& run_dir);

}  // namespace agopbench
