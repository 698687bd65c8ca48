#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semcom/tensor.hpp"

namespace semcom {

// One sample: (3,h,w) pixels in [0,1] plus its class label.
struct LabeledImage {
  Tensor pixels;
  uint16_t label = 0;
  uint32_t id = 0;
};

struct Dataset {
  std::vector<LabeledImage> images;
  uint16_t num_classes = 0;
  std::string split = "train";

  size_t height() const { return images.empty() ? 0 : images[0].pixels.extent(1); }
  size_t width() const { return images.empty() ? 0 : images[0].pixels.extent(2); }
};

// Number of distinct shape templates available to the generator.
size_t synthetic_shape_count();

// Deterministic toy dataset: each class is one shape template drawn in a
// fixed per-class hue at a seeded random position over low-amplitude noise,
// so the class evidence sits in a handful of patches. Instance k of every
// class shares the same placement stream, which makes cross-class
// comparisons at fixed position possible.
Dataset generate_synthetic(size_t num_classes, size_t per_class, size_t h,
                           size_t w, uint64_t seed);

// "SEMD" container, little-endian: magic, version u16, num_classes u16,
// count u32, h u16, w u16, channels u16, then per image:
// id u32, label u16, h*w*channels f32 pixels.
void save_dataset(const Dataset& ds, const std::string& path);

// patch_size > 0 additionally requires h and w divisible by it.
Dataset load_dataset(const std::string& path, size_t patch_size = 0);

}  // namespace semcom
