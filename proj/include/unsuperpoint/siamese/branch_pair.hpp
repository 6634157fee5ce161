#pragma once

#include <cstdint>

#include "unsuperpoint/core/image.hpp"
#include "unsuperpoint/core/rng.hpp"
#include "unsuperpoint/geometry/homography.hpp"
#include "unsuperpoint/siamese/photometric.hpp"

namespace unsuperpoint {

// Two views of the same image: branch A keeps the original geometry,
// branch B is warped by t. Both get independent photometric
// augmentation. t maps A-frame pixels to B-frame pixels.
struct BranchPair {
  Image image_a;
  Image image_b;
  Homography t;
};

inline BranchPair make_branch_pair(const Image& image, const HomographyParams& homography_params,
                                   const PhotometricParams& photo_params, std::uint64_t seed) {
  if (image.height % 8 != 0 || image.width % 8 != 0)
    throw std::invalid_argument("make_branch_pair: image dimensions must be a multiple of 8");
  BranchPair pair;
  pair.t = sample_homography(homography_params, image.height, image.width, Rng::derive(seed, 1));
  Image warped = warp_image(pair.t, image);
  pair.image_a = photometric_augment(image, photo_params, Rng::derive(seed, 2));
  pair.image_b = photometric_augment(warped, photo_params, Rng::derive(seed, 3));
  return pair;
}

}  // namespace unsuperpoint
