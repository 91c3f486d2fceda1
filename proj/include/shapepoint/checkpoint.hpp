#pragma once

// Single-file parameter archive:
//   "SHPTCKPT" | u32 version | u64 header bytes | JSON header | f32 payload
// The header holds the config snapshot, the step counter and a tensor table
// {name, shape, offset} with offsets counted in scalars. All integers and
// scalars are little-endian.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "shapepoint/nn.hpp"

namespace shapepoint::checkpoint {

inline constexpr char kMagic[8] = {'S', 'H', 'P', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

struct StoredTensor {
  std::vector<int> shape;
  std::vector<float> data;
};

struct Archive {
  std::string config_json;
  std::int64_t step = 0;
  std::map<std::string, StoredTensor> tensors;
};

Archive capture(const nn::ParamList<float>& params, std::string config_json, std::int64_t step);
// Copies archived values into params; every param must be present with a
// matching shape (FormatError otherwise). Extra archive entries are ignored.
void restore(const Archive& a, const nn::ParamList<float>& params);

void save(const std::filesystem::path& file, const Archive& a);
Archive load(const std::filesystem::path& file);

}  // namespace shapepoint::checkpoint
