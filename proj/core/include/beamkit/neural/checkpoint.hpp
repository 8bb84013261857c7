#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "beamkit/neural/model.hpp"
#include "beamkit/signal_io.hpp"

namespace beamkit::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Binary container: magic "BKCKPT\0\0", u32 version, u32 metadata length,
/// metadata JSON (model config, STFT config, seed), u32 tensor count, then per
/// tensor: u32 name length, name, u32 rank, i32 dims, float64 values. All
/// integers and floats little-endian.
struct Checkpoint {
  ExtractorConfig config;
  StftConfig stft;
  std::uint64_t seed = 0;
  std::vector<NamedTensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const NeuralExtractor& model,
                     const StftConfig& stft);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into a store with the same names and shapes.
void load_parameters(const Checkpoint& checkpoint, ParamStore& store);
/// Builds the model the checkpoint was saved from.
NeuralExtractor restore_model(const Checkpoint& checkpoint);

}  // namespace beamkit::nn
