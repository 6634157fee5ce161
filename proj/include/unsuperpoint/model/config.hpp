#pragma once

#include <array>
#include <stdexcept>

namespace unsuperpoint {

struct ModelConfig {
  std::array<int, 8> backbone_channels = {32, 32, 64, 64, 128, 128, 256, 256};
  int descriptor_dim = 256;
  int downsample_factor = 8;  // three stride-2 poolings
  float leaky_relu_slope = 0.1f;
  bool normalize_descriptors = true;

  void validate() const {
    if (descriptor_dim < 1) throw std::invalid_argument("ModelConfig: descriptor_dim must be >= 1");
    if (downsample_factor != 8)
      throw std::invalid_argument("ModelConfig: downsample_factor must be 8 (three 2x poolings)");
    for (int c : backbone_channels)
      if (c < 1) throw std::invalid_argument("ModelConfig: backbone channels must be positive");
  }
};

}  // namespace unsuperpoint
