#ifndef NILEL_MANIFEST_HPP
#define NILEL_MANIFEST_HPP

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

namespace nilel {

// FNV-1a 64 over the file bytes, hex-encoded. Identity check for manifest
// replay, not a cryptographic digest.
std::string hash_file_hex(const std::filesystem::path& path);

// Record of one CLI run: the resolved configuration plus content hashes of
// everything read and written. Re-running the stored command on unchanged
// inputs must reproduce the recorded output hashes byte for byte. No
// timestamps on purpose.
struct Manifest {
  std::string command;
  nlohmann::json config;
  std::map<std::string, std::string> inputs;   // path -> hash
  std::map<std::string, std::string> outputs;  // path -> hash
};

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace nilel

#endif  // NILEL_MANIFEST_HPP
