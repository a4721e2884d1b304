#include "kandu/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "kandu/image_io.hpp"

namespace kandu {

std::size_t Sample::foreground() const {
  std::size_t n = 0;
  for (auto v : mask) n += v;
  return n;
}

namespace {

Sample from_image(const Image8& img) {
  Sample s;
  s.width = img.width;
  s.height = img.height;
  s.image.resize(s.width * s.height * 3);
  s.mask.assign(s.width * s.height, 0);
  for (std::size_t p = 0; p < s.width * s.height; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = img.channels == 3 ? p * 3 + c : p;
      s.image[p * 3 + c] = float(img.pixels[src]) / 255.0f;
    }
  return s;
}

}  // namespace

Sample load_image(const std::filesystem::path& image_path) { return from_image(read_png(image_path)); }

Sample load_sample(const std::filesystem::path& image_path,
                   const std::filesystem::path& mask_path) {
  const Image8 img = read_png(image_path);
  const Image8 msk = read_png(mask_path);
  if (img.width != msk.width || img.height != msk.height)
    throw std::runtime_error("sample " + image_path.string() + ": image is " +
                             std::to_string(img.width) + "x" + std::to_string(img.height) +
                             " but mask " + mask_path.string() + " is " +
                             std::to_string(msk.width) + "x" + std::to_string(msk.height));
  Sample s = from_image(img);
  for (std::size_t p = 0; p < s.width * s.height; ++p)
    s.mask[p] = msk.pixels[p * msk.channels] >= kMaskThreshold ? 1 : 0;
  return s;
}

Sample resize_to(const Sample& s, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0 || s.width == 0 || s.height == 0)
    throw std::invalid_argument("resize_to: extents must be positive");
  if (width == s.width && height == s.height) return s;
  Sample out;
  out.width = width;
  out.height = height;
  out.image.resize(width * height * 3);
  out.mask.resize(width * height);
  const double sx = double(s.width) / double(width);
  const double sy = double(s.height) / double(height);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((double(y) + 0.5) * sy - 0.5, 0.0, double(s.height - 1));
    const std::size_t y0 = std::size_t(fy);
    const std::size_t y1 = std::min(y0 + 1, s.height - 1);
    const double wy = fy - double(y0);
    const std::size_t ny = std::min(std::size_t((double(y) + 0.5) * sy), s.height - 1);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((double(x) + 0.5) * sx - 0.5, 0.0, double(s.width - 1));
      const std::size_t x0 = std::size_t(fx);
      const std::size_t x1 = std::min(x0 + 1, s.width - 1);
      const double wx = fx - double(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1.0 - wx) * s.pixel(y0, x0, c) + wx * s.pixel(y0, x1, c);
        const double bot = (1.0 - wx) * s.pixel(y1, x0, c) + wx * s.pixel(y1, x1, c);
        out.image[(y * width + x) * 3 + c] = float((1.0 - wy) * top + wy * bot);
      }
      const std::size_t nx = std::min(std::size_t((double(x) + 0.5) * sx), s.width - 1);
      out.mask[y * width + x] = s.label(ny, nx) ? 1 : 0;
    }
  }
  return out;
}

namespace {

// Generic pixel remap: out(y, x) = in(src(y, x)).
template <typename Fn>
Sample remap(const Sample& s, std::size_t width, std::size_t height, Fn&& src) {
  Sample out;
  out.width = width;
  out.height = height;
  out.image.resize(width * height * 3);
  out.mask.resize(width * height);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const auto [sy, sx] = src(y, x);
      for (std::size_t c = 0; c < 3; ++c) out.image[(y * width + x) * 3 + c] = s.pixel(sy, sx, c);
      out.mask[y * width + x] = s.label(sy, sx);
    }
  return out;
}

Sample rotate90(const Sample& s) {
  // Counter-clockwise: out(y, x) = in(x, W - 1 - y), out is W tall and H wide.
  return remap(s, s.height, s.width, [&](std::size_t y, std::size_t x) {
    return std::pair{x, s.width - 1 - y};
  });
}

Sample crop(const Sample& s, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  return remap(s, w, h, [&](std::size_t y, std::size_t x) { return std::pair{y0 + y, x0 + x}; });
}

}  // namespace

AugmentPlan draw_augment(Rng& rng) {
  AugmentPlan plan;
  plan.hflip = rng.bernoulli(0.5);
  plan.vflip = rng.bernoulli(0.5);
  const bool rotate = rng.bernoulli(0.5);
  const unsigned turns = unsigned(1 + rng.below(3));
  plan.rot90 = rotate ? turns : 0;
  plan.crop = rng.bernoulli(0.5);
  const double area = rng.uniform(0.75, 1.0);
  const double cx = rng.uniform();
  const double cy = rng.uniform();
  if (plan.crop) {
    plan.crop_area = area;
    plan.crop_x = cx;
    plan.crop_y = cy;
  }
  return plan;
}

Sample apply_augment(const Sample& s, const AugmentPlan& plan) {
  Sample out = s;
  if (plan.hflip)
    out = remap(out, out.width, out.height,
                [w = out.width](std::size_t y, std::size_t x) { return std::pair{y, w - 1 - x}; });
  if (plan.vflip)
    out = remap(out, out.width, out.height,
                [h = out.height](std::size_t y, std::size_t x) { return std::pair{h - 1 - y, x}; });
  for (unsigned k = 0; k < plan.rot90 % 4; ++k) out = rotate90(out);
  if (plan.crop) {
    const double side = std::sqrt(std::clamp(plan.crop_area, 0.0, 1.0));
    const std::size_t w = std::max<std::size_t>(1, std::size_t(std::lround(side * double(out.width))));
    const std::size_t h = std::max<std::size_t>(1, std::size_t(std::lround(side * double(out.height))));
    const std::size_t x0 = std::min(out.width - w, std::size_t(plan.crop_x * double(out.width - w + 1)));
    const std::size_t y0 = std::min(out.height - h, std::size_t(plan.crop_y * double(out.height - h + 1)));
    const std::size_t ow = out.width, oh = out.height;
    out = resize_to(crop(out, x0, y0, w, h), ow, oh);
  }
  return out;
}

namespace {

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t;
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = (dx * cos_t + dy * sin_t) / a;
    const double v = (-dx * sin_t + dy * cos_t) / b;
    return u * u + v * v <= 1.0;
  }
};

Sample synth_one(std::size_t size, Rng& rng) {
  const double n = double(size);
  std::vector<Ellipse> blobs;
  std::vector<std::uint8_t> mask(size * size);
  for (;;) {
    blobs.clear();
    const std::size_t count = 1 + rng.below(4);
    for (std::size_t k = 0; k < count; ++k) {
      const double a = rng.uniform(0.07, 0.22) * n;
      const double b = rng.uniform(0.07, 0.22) * n;
      const double t = rng.uniform(0.0, std::numbers::pi);
      blobs.push_back({rng.uniform(0.15, 0.85) * n, rng.uniform(0.15, 0.85) * n, a, b,
                       std::cos(t), std::sin(t)});
    }
    std::size_t fg = 0;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        bool in = false;
        for (const auto& e : blobs) in = in || e.contains(double(x) + 0.5, double(y) + 0.5);
        mask[y * size + x] = in ? 1 : 0;
        fg += in;
      }
    const double frac = double(fg) / (n * n);
    if (frac >= 0.02 && frac <= 0.5) break;
  }

  // Pink background with low-frequency texture, purple blobs.
  const double bg[3] = {rng.uniform(0.82, 0.95), rng.uniform(0.65, 0.8), rng.uniform(0.75, 0.9)};
  const double fgc[3] = {rng.uniform(0.45, 0.65), rng.uniform(0.2, 0.35), rng.uniform(0.5, 0.7)};
  struct Wave { double fx, fy, phase, amp; };
  Wave waves[3];
  for (auto& w : waves)
    w = {rng.uniform(1.0, 4.0) / n, rng.uniform(1.0, 4.0) / n, rng.uniform(0.0, 2.0 * std::numbers::pi),
         rng.uniform(0.02, 0.06)};

  Sample s;
  s.width = s.height = size;
  s.mask = std::move(mask);
  s.image.resize(size * size * 3);
  constexpr int kSuper = 4;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      int inside = 0;
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = double(x) + (sx + 0.5) / kSuper;
          const double py = double(y) + (sy + 0.5) / kSuper;
          for (const auto& e : blobs)
            if (e.contains(px, py)) {
              ++inside;
              break;
            }
        }
      const double cover = double(inside) / (kSuper * kSuper);
      double tex = 0;
      for (const auto& w : waves)
        tex += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * double(x) + w.fy * double(y)) + w.phase);
      for (std::size_t c = 0; c < 3; ++c) {
        const double noise = rng.uniform(-0.03, 0.03);
        const double v = (1.0 - cover) * (bg[c] + tex) + cover * (fgc[c] + 0.5 * tex) + noise;
        s.image[(y * size + x) * 3 + c] = float(std::clamp(v, 0.0, 1.0));
      }
    }
  return s;
}

}  // namespace

std::vector<Sample> synth_generate(std::size_t n, std::size_t size, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("synth_generate: need at least one sample");
  if (size < 8) throw std::invalid_argument("synth_generate: size must be at least 8");
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, 0x5e7, i);
    out.push_back(synth_one(size, rng));
  }
  return out;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

DatasetManifest read_manifest(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest " + path.string() + ": cannot open");
  DatasetManifest m;
  m.split = split;
  const auto base = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw std::runtime_error("manifest " + path.string() + " line " + std::to_string(lineno) +
                               ": expected image<TAB>mask");
    ManifestEntry e{line.substr(0, tab), line.substr(tab + 1)};
    if (e.image.is_relative()) e.image = base / e.image;
    if (e.mask.is_relative()) e.mask = base / e.mask;
    for (const auto& p : {e.image, e.mask})
      if (!std::filesystem::exists(p))
        throw std::runtime_error("manifest " + path.string() + " line " + std::to_string(lineno) +
                                 ": missing file " + p.string());
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("manifest " + path.string() + ": cannot open for writing");
  for (const auto& e : manifest.entries) out << e.image.string() << '\t' << e.mask.string() << '\n';
  if (!out) throw std::runtime_error("manifest " + path.string() + ": write failed");
}

std::vector<std::size_t> split_sizes(std::size_t n, const SplitFractions& f) {
  const double fr[3] = {f.train, f.val, f.test};
  for (double v : fr)
    if (v < 0.0) throw std::invalid_argument("split: fractions must be non-negative");
  if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions must sum to 1");
  std::vector<std::size_t> sizes(3);
  double rem[3];
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = fr[k] * double(n);
    sizes[k] = std::size_t(std::floor(exact + 1e-9));
    rem[k] = exact - double(sizes[k]);
    used += sizes[k];
  }
  while (used < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (rem[k] > rem[best] + 1e-12) best = k;
    ++sizes[best];
    rem[best] = -1.0;
    ++used;
  }
  return sizes;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::vector<DatasetManifest> split(const DatasetManifest& manifest, const SplitFractions& f,
                                   std::uint64_t seed) {
  if (manifest.entries.empty()) throw std::invalid_argument("split: empty manifest");
  auto parts = split_items(manifest.entries, f, seed);
  std::vector<DatasetManifest> out(3);
  const Split tags[3] = {Split::train, Split::val, Split::test};
  for (int k = 0; k < 3; ++k) {
    out[k].split = tags[k];
    out[k].entries = std::move(parts[k]);
  }
  return out;
}

}  // namespace kandu
