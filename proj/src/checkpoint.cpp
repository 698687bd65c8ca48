#include "semcom/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "semcom/errors.hpp"

namespace semcom {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'C'};

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  uint8_t u8() { return take(1)[0]; }
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
    uint32_t bits = u32();
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
      throw ParseError(ParseError::Kind::Truncated,
                       "checkpoint: truncated payload");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
    pos_ += n;
    return p;
  }
  std::string bytes_;
  size_t pos_ = 0;
};

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

void save_checkpoint(const std::vector<const Parameter*>& params,
                     const std::string& path) {
  std::set<std::string> seen;
  std::string buf;
  buf.append(kMagic, 4);
  put_u16(buf, kCheckpointVersion);
  put_u32(buf, static_cast<uint32_t>(params.size()));
  for (const Parameter* p : params) {
    if (!seen.insert(p->name).second) {
      throw std::invalid_argument("checkpoint: duplicate parameter name " +
                                  p->name);
    }
    if (p->name.size() > 0xffff) {
      throw std::invalid_argument("checkpoint: parameter name too long");
    }
    put_u16(buf, static_cast<uint16_t>(p->name.size()));
    buf.append(p->name);
    const Shape& s = p->tensor.shape();
    if (s.size() > 0xff) {
      throw std::invalid_argument("checkpoint: rank too large");
    }
    buf.push_back(static_cast<char>(s.size()));
    for (size_t d : s) put_u32(buf, static_cast<uint32_t>(d));
    for (float v : p->tensor.data()) put_f32(buf, v);
  }
  write_file(path, buf);
}

void save_checkpoint(const std::vector<Parameter*>& params,
                     const std::string& path) {
  std::vector<const Parameter*> cp(params.begin(), params.end());
  save_checkpoint(cp, path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  Reader r(read_file(path));
  if (r.str(4) != std::string(kMagic, 4)) {
    throw ParseError(ParseError::Kind::BadMagic, "checkpoint: bad magic");
  }
  const uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw ParseError(ParseError::Kind::BadVersion,
                     "checkpoint: unsupported version " +
                         std::to_string(version));
  }
  const uint32_t count = r.u32();
  std::map<std::string, Tensor> result;
  for (uint32_t k = 0; k < count; ++k) {
    const uint16_t name_len = r.u16();
    std::string name = r.str(name_len);
    const uint8_t rank = r.u8();
    Shape shape(rank);
    for (uint8_t i = 0; i < rank; ++i) shape[i] = r.u32();
    std::vector<float> data(shape_numel(shape));
    for (float& v : data) v = r.f32();
    if (result.count(name)) {
      throw ParseError(ParseError::Kind::BadValue,
                       "checkpoint: duplicate entry " + name);
    }
    result.emplace(std::move(name),
                   Tensor::from_data(std::move(shape), std::move(data)));
  }
  if (!r.at_end()) {
    throw ParseError(ParseError::Kind::BadValue,
                     "checkpoint: trailing bytes after last entry");
  }
  return result;
}

void load_checkpoint_into(const std::string& path,
                          const std::vector<Parameter*>& params) {
  auto entries = load_checkpoint(path);
  for (Parameter* p : params) {
    auto it = entries.find(p->name);
    if (it == entries.end()) {
      throw ParseError(ParseError::Kind::BadValue,
                       "checkpoint: missing parameter " + p->name);
    }
    if (it->second.shape() != p->tensor.shape()) {
      throw ParseError(ParseError::Kind::BadExtent,
                       "checkpoint: shape mismatch for " + p->name);
    }
    auto dst = p->tensor.mutable_data();
    auto src = it->second.data();
    std::copy(src.begin(), src.end(), dst.begin());
    entries.erase(it);
  }
  if (!entries.empty()) {
    throw ParseError(ParseError::Kind::BadValue,
                     "checkpoint: unknown parameter " + entries.begin()->first);
  }
}

}  // namespace semcom
