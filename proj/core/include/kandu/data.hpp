#pragma once

// Image/mask samples, manifests, preprocessing, augmentation and a synthetic
// blob dataset.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kandu/random.hpp"

namespace kandu {

struct Sample {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> image;        // height*width*3, interleaved RGB in [0, 1]
  std::vector<std::uint8_t> mask;  // height*width, values in {0, 1}

  float pixel(std::size_t y, std::size_t x, std::size_t c) const {
    return image[(y * width + x) * 3 + c];
  }
  std::uint8_t label(std::size_t y, std::size_t x) const { return mask[y * width + x]; }
  std::size_t foreground() const;
  bool operator==(const Sample&) const = default;
};

inline constexpr std::uint8_t kMaskThreshold = 128;

/// Image scaled by 1/255 (gray inputs replicated to RGB); mask from the
/// first channel, 1 where value >= 128.
Sample load_sample(const std::filesystem::path& image_path,
                   const std::filesystem::path& mask_path);

/// Image only; the mask is all zeros.
Sample load_image(const std::filesystem::path& image_path);

/// Bilinear (half-pixel centers, edge clamped) for the image, nearest for
/// the mask. Same-size input is returned unchanged.
Sample resize_to(const Sample& s, std::size_t width, std::size_t height);
inline Sample resize_to(const Sample& s, std::size_t size = 256) { return resize_to(s, size, size); }

/// One draw of the augmentation pipeline, applied in the order listed.
struct AugmentPlan {
  bool hflip = false;
  bool vflip = false;
  unsigned rot90 = 0;        // quarter turns counter-clockwise, 0..3
  bool crop = false;
  double crop_area = 1.0;    // fraction of the area kept, in [0.75, 1]
  double crop_x = 0.0;       // offset of the crop window as a fraction of the slack
  double crop_y = 0.0;

  bool is_identity() const { return !hflip && !vflip && rot90 == 0 && !crop; }
};

/// Each transform has probability 0.5; the rotation picks 1, 2 or 3 quarter
/// turns uniformly; the crop keeps 75-100% of the area and is resized back.
AugmentPlan draw_augment(Rng& rng);
Sample apply_augment(const Sample& s, const AugmentPlan& plan);
inline Sample augment(const Sample& s, Rng& rng) { return apply_augment(s, draw_augment(rng)); }

/// Synthetic segmentation set: 1-4 anti-aliased ellipses over a smooth
/// textured background. The mask is the set of pixel centers inside any
/// ellipse and covers 2-50% of the image.
std::vector<Sample> synth_generate(std::size_t n, std::size_t size, std::uint64_t seed);

enum class Split { train, val, test };
std::string split_name(Split s);

struct ManifestEntry {
  std::filesystem::path image;
  std::filesystem::path mask;
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  Split split = Split::train;
  std::vector<ManifestEntry> entries;
};

/// `image<TAB>mask` per line, `#` comments and blank lines skipped. Relative
/// paths resolve against the manifest's directory. Missing files are
/// rejected with the offending line.
DatasetManifest read_manifest(const std::filesystem::path& path, Split split = Split::train);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Seeded shuffle, then contiguous train/val/test slices. Sizes are
/// floor(n * fraction); leftover items go one each to the splits with the
/// largest fractional remainders (ties: train, val, test order).
std::vector<std::size_t> split_sizes(std::size_t n, const SplitFractions& f);

/// Deterministic permutation of [0, n) (Fisher-Yates).
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

template <typename Item>
std::vector<std::vector<Item>> split_items(const std::vector<Item>& items, const SplitFractions& f,
                                           std::uint64_t seed) {
  const auto sizes = split_sizes(items.size(), f);
  Rng rng = Rng::derive(seed, 0x5b11);
  const auto order = shuffled_indices(items.size(), rng);
  std::vector<std::vector<Item>> out(3);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < sizes[k]; ++i) out[k].push_back(items[order[pos++]]);
  return out;
}

/// Rejects an empty manifest.
std::vector<DatasetManifest> split(const DatasetManifest& manifest, const SplitFractions& f,
                                   std::uint64_t seed);

}  // namespace kandu
