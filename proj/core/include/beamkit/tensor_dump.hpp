#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "beamkit/features.hpp"

namespace beamkit {

/// Flat float64 tensor with a small JSON header describing it.
///
/// File layout: 8-byte magic "BKTENSOR", uint32 header length, UTF-8 JSON
/// header {"dtype":"float64","shape":[...],"names":[...]}, then the values in
/// row-major order, little-endian.
struct TensorDump {
  std::vector<std::int64_t> shape;
  std::vector<std::string> names;
  std::vector<double> values;
};

void write_tensor_dump(const std::filesystem::path& path, const TensorDump& dump);
TensorDump read_tensor_dump(const std::filesystem::path& path);

/// Feature stack as an (N, F, T) dump with plane names.
TensorDump to_dump(const FeatureStack& features);

}  // namespace beamkit
