#ifndef NILEL_CHECKPOINT_HPP
#define NILEL_CHECKPOINT_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nilel/neural.hpp"

namespace nilel {

// Binary tensor container:
//   8-byte magic "NILELCK1"
//   u64 header length + UTF-8 JSON header
//   u32 tensor count, then per tensor:
//     u32 name length + name, u64 rows, u64 cols,
//     rows*cols f64 values, row-major, little-endian.
// Save/load round-trips bitwise.
void checkpoint_write(const std::filesystem::path& path,
                      const nlohmann::json& header,
                      const std::vector<ParamRef>& tensors);

struct LoadedTensor {
  long rows = 0, cols = 0;
  std::vector<double> values;  // row-major
};

struct LoadedCheckpoint {
  nlohmann::json header;
  std::map<std::string, LoadedTensor> tensors;
};

LoadedCheckpoint checkpoint_read(const std::filesystem::path& path);

// Copies tensors into the refs by name; throws on a missing or mis-shaped
// tensor.
void fill_params(const LoadedCheckpoint& ckpt,
                 const std::vector<ParamRef>& refs);

nlohmann::json encoder_config_to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

void save_encoder(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_encoder(const std::filesystem::path& path);

}  // namespace nilel

#endif  // NILEL_CHECKPOINT_HPP
