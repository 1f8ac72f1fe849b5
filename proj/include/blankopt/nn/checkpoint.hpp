#pragma once

// NNCK model files: magic, version, metadata, layer table, then named
// little-endian f32 tensors.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "blankopt/nn/layers.hpp"

namespace blankopt::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  std::vector<float> values;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<LayerSpec> layers;
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies parameters and buffers into a checkpoint, and back by name.
void store_state(Checkpoint& ck, const std::vector<Param<float>*>& params, const std::vector<Buffer<float>>& buffers);
void load_state(const Checkpoint& ck, const std::vector<Param<float>*>& params, const std::vector<Buffer<float>>& buffers);

// FNV-1a over all parameter bytes; used to show that weights did not change.
std::uint64_t parameter_checksum(const std::vector<Param<float>*>& params);

}  // namespace blankopt::nn
