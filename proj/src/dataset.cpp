#include "semcom/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "semcom/errors.hpp"
#include "semcom/rng.hpp"

namespace semcom {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'D'};
constexpr uint16_t kVersion = 1;
constexpr float kBackgroundAmplitude = 0.2f;
constexpr float kShapeIntensity = 0.9f;

struct Rgb {
  float r, g, b;
};

// Hue-only HSV->RGB (s = v = 1).
Rgb hue_to_rgb(double hue_deg) {
  const double h = std::fmod(hue_deg, 360.0) / 60.0;
  const int i = static_cast<int>(h) % 6;
  const float f = static_cast<float>(h - std::floor(h));
  const float q = 1.0f - f;
  switch (i) {
    case 0: return {1.0f, f, 0.0f};
    case 1: return {q, 1.0f, 0.0f};
    case 2: return {0.0f, 1.0f, f};
    case 3: return {0.0f, q, 1.0f};
    case 4: return {f, 0.0f, 1.0f};
    default: return {1.0f, 0.0f, q};
  }
}

// Shape template predicates over offsets from the shape center.
bool in_shape(size_t tmpl, long dy, long dx, long r) {
  const long d2 = dy * dy + dx * dx;
  switch (tmpl) {
    case 0:  // disk
      return d2 <= r * r;
    case 1:  // square
      return std::labs(dy) <= r && std::labs(dx) <= r;
    case 2:  // plus cross
      return (std::labs(dy) <= r / 3 && std::labs(dx) <= r) ||
             (std::labs(dx) <= r / 3 && std::labs(dy) <= r);
    case 3:  // triangle, apex up
      return dy >= -r && dy <= r && std::labs(dx) <= (dy + r) / 2;
    case 4: {  // ring
      const long inner = (r * 55) / 100;
      return d2 <= r * r && d2 >= inner * inner;
    }
    case 5:  // diamond
      return std::labs(dy) + std::labs(dx) <= r;
    case 6:  // two vertical stripes
      return std::labs(dy) <= r && (std::labs(dx - r / 2) <= r / 5 ||
                                    std::labs(dx + r / 2) <= r / 5);
    default:  // opposite quadrants
      return std::labs(dy) <= r && std::labs(dx) <= r &&
             ((dy >= 0) == (dx >= 0));
  }
}

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
  uint16_t u16() {
    const auto* p = take(2);
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }
  uint32_t u32() {
    const auto* p = take(4);
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) |
           (static_cast<uint32_t>(p[3]) << 24);
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(size_t n) {
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const unsigned char* take(size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw ParseError(ParseError::Kind::Truncated, "dataset: truncated payload");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
    pos_ += n;
    return p;
  }
  std::string bytes_;
  size_t pos_ = 0;
};

}  // namespace

size_t synthetic_shape_count() { return 8; }

Dataset generate_synthetic(size_t num_classes, size_t per_class, size_t h,
                           size_t w, uint64_t seed) {
  if (num_classes < 2) {
    throw std::invalid_argument("generate_synthetic: need at least 2 classes");
  }
  if (num_classes > synthetic_shape_count()) {
    throw std::invalid_argument(
        "generate_synthetic: only " + std::to_string(synthetic_shape_count()) +
        " shape templates available");
  }
  if (h < 8 || w < 8) {
    throw std::invalid_argument("generate_synthetic: image too small");
  }

  const long r = static_cast<long>(std::min(h, w) / 8);
  Dataset ds;
  ds.num_classes = static_cast<uint16_t>(num_classes);
  ds.images.reserve(num_classes * per_class);

  const size_t total = num_classes * per_class;
  for (size_t i = 0; i < total; ++i) {
    const size_t cls = i % num_classes;
    const size_t instance = i / num_classes;

    // Placement stream depends only on the instance slot, so instance k of
    // any two classes lands at the same position.
    Rng pos_rng(derive_seed(seed, instance, 0x706f73));
    const long cy = static_cast<long>(r) +
                    static_cast<long>(pos_rng.uniform_index(h - 2 * r));
    const long cx = static_cast<long>(r) +
                    static_cast<long>(pos_rng.uniform_index(w - 2 * r));

    Rng bg_rng(derive_seed(seed, cls, instance, 0x6267));
    std::vector<float> px(3 * h * w);
    for (float& v : px) {
      v = static_cast<float>(bg_rng.uniform() * kBackgroundAmplitude);
    }

    const Rgb color = hue_to_rgb(static_cast<double>(cls) * 137.508);
    const float shade[3] = {color.r * kShapeIntensity, color.g * kShapeIntensity,
                            color.b * kShapeIntensity};
    for (long y = std::max(0L, cy - r); y <= std::min<long>(h - 1, cy + r); ++y) {
      for (long x = std::max(0L, cx - r); x <= std::min<long>(w - 1, cx + r); ++x) {
        if (!in_shape(cls, y - cy, x - cx, r)) continue;
        for (size_t c = 0; c < 3; ++c) {
          px[c * h * w + static_cast<size_t>(y) * w + static_cast<size_t>(x)] =
              shade[c];
        }
      }
    }

    LabeledImage img;
    img.pixels = Tensor::from_data({3, h, w}, std::move(px));
    img.label = static_cast<uint16_t>(cls);
    img.id = static_cast<uint32_t>(i);
    ds.images.push_back(std::move(img));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u16(buf, kVersion);
  put_u16(buf, ds.num_classes);
  put_u32(buf, static_cast<uint32_t>(ds.images.size()));
  const uint16_t h = static_cast<uint16_t>(ds.height());
  const uint16_t w = static_cast<uint16_t>(ds.width());
  put_u16(buf, h);
  put_u16(buf, w);
  put_u16(buf, 3);
  for (const LabeledImage& img : ds.images) {
    if (img.pixels.shape() != Shape{3, h, w}) {
      throw std::invalid_argument("save_dataset: inconsistent image shape");
    }
    put_u32(buf, img.id);
    put_u16(buf, img.label);
    for (float v : img.pixels.data()) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(buf, bits);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Dataset load_dataset(const std::string& path, size_t patch_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));

  if (r.str(4) != std::string(kMagic, 4)) {
    throw ParseError(ParseError::Kind::BadMagic, "dataset: bad magic");
  }
  if (r.u16() != kVersion) {
    throw ParseError(ParseError::Kind::BadVersion, "dataset: unsupported version");
  }
  Dataset ds;
  ds.num_classes = r.u16();
  const uint32_t count = r.u32();
  const size_t h = r.u16();
  const size_t w = r.u16();
  const size_t channels = r.u16();
  if (channels != 3 || h == 0 || w == 0) {
    throw ParseError(ParseError::Kind::BadExtent, "dataset: bad image extents");
  }
  if (patch_size > 0 && (h % patch_size != 0 || w % patch_size != 0)) {
    throw ParseError(ParseError::Kind::BadExtent,
                     "dataset: extents " + std::to_string(h) + "x" +
                         std::to_string(w) + " not divisible by patch size " +
                         std::to_string(patch_size));
  }
  ds.images.reserve(count);
  for (uint32_t k = 0; k < count; ++k) {
    LabeledImage img;
    img.id = r.u32();
    img.label = r.u16();
    if (img.label >= ds.num_classes) {
      throw ParseError(ParseError::Kind::BadValue,
                       "dataset: label out of range");
    }
    std::vector<float> px(3 * h * w);
    for (float& v : px) {
      v = r.f32();
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw ParseError(ParseError::Kind::BadValue,
                         "dataset: pixel outside [0,1]");
      }
    }
    img.pixels = Tensor::from_data({3, h, w}, std::move(px));
    ds.images.push_back(std::move(img));
  }
  if (!r.at_end()) {
    throw ParseError(ParseError::Kind::BadValue, "dataset: trailing bytes");
  }
  return ds;
}

}  // namespace semcom
