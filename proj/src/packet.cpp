#include "semcom/packet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "semcom/errors.hpp"

namespace semcom {

size_t budget_for_rate(double rate, size_t num_patches) {
  if (!(rate > 0.0) || rate > 1.0) {
    throw std::invalid_argument("budget_for_rate: rate must be in (0,1]");
  }
  if (rate == 1.0) return num_patches;
  return static_cast<size_t>(
      std::floor(rate * static_cast<double>(num_patches)));
}

Packet pack(const Tensor& z, const SelectionMask& mask, uint32_t image_id) {
  if (z.rank() != 2) throw std::invalid_argument("pack: z must be (D,P+1)");
  const size_t d = z.extent(0);
  const size_t p = mask.count();
  if (z.extent(1) != p + 1) {
    throw std::invalid_argument("pack: mask covers " + std::to_string(p) +
                                " patches but z has " +
                                std::to_string(z.extent(1)) + " columns");
  }
  Packet pkt;
  pkt.image_id = image_id;
  pkt.num_patches = static_cast<uint16_t>(p);
  pkt.token_dim = static_cast<uint16_t>(d);
  pkt.n_selected = static_cast<uint16_t>(mask.n_selected);
  pkt.mask_bitmap = mask.to_bitmap();
  pkt.payload.reserve(mask.n_selected * d);
  auto src = z.data();
  for (size_t i = 0; i < p; ++i) {
    if (!mask.flat[i]) continue;
    // Column i+1 of z: the CLS column 0 stays home.
    for (size_t r = 0; r < d; ++r) {
      pkt.payload.push_back(src[r * (p + 1) + i + 1]);
    }
  }
  return pkt;
}

namespace {

void validate_packet(const Packet& pkt) {
  const size_t p = pkt.num_patches;
  if (pkt.mask_bitmap.size() != (p + 7) / 8) {
    throw ParseError(ParseError::Kind::CorruptPacket,
                     "packet: bitmap length mismatch");
  }
  size_t popcount = 0;
  for (size_t i = 0; i < pkt.mask_bitmap.size() * 8; ++i) {
    if (pkt.mask_bitmap[i / 8] & (1u << (i % 8))) {
      if (i >= p) {
        throw ParseError(ParseError::Kind::CorruptPacket,
                         "packet: trailing bitmap bits set");
      }
      ++popcount;
    }
  }
  if (popcount != pkt.n_selected) {
    throw ParseError(ParseError::Kind::CorruptPacket,
                     "packet: bitmap popcount disagrees with n_selected");
  }
  if (pkt.payload.size() !=
      static_cast<size_t>(pkt.n_selected) * pkt.token_dim) {
    throw ParseError(ParseError::Kind::CorruptPacket,
                     "packet: payload length disagrees with n_selected");
  }
}

}  // namespace

std::pair<Tensor, SelectionMask> unpack(const Packet& pkt, size_t rows,
                                        size_t cols) {
  if (rows * cols != pkt.num_patches) {
    throw std::invalid_argument("unpack: grid does not match packet P");
  }
  validate_packet(pkt);
  SelectionMask mask = SelectionMask::from_bitmap(pkt.mask_bitmap, rows, cols);
  const size_t d = pkt.token_dim;
  const size_t p = pkt.num_patches;
  std::vector<float> z(d * p, 0.0f);
  size_t next = 0;
  for (size_t i = 0; i < p; ++i) {
    if (!mask.flat[i]) continue;
    for (size_t r = 0; r < d; ++r) {
      z[r * p + i] = pkt.payload[next * d + r];
    }
    ++next;
  }
  return {Tensor::from_data({d, p}, std::move(z)), std::move(mask)};
}

std::pair<Tensor, SelectionMask> unpack(const Packet& pkt) {
  const size_t side =
      static_cast<size_t>(std::lround(std::sqrt(pkt.num_patches)));
  if (side * side != pkt.num_patches) {
    throw std::invalid_argument(
        "unpack: non-square patch count needs explicit grid dims");
  }
  return unpack(pkt, side, side);
}

namespace {

void put_u16(std::vector<uint8_t>& buf, uint16_t v) {
  buf.push_back(static_cast<uint8_t>(v & 0xff));
  buf.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
}

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(std::span<const uint8_t> b, size_t& pos) {
  if (pos + 2 > b.size()) {
    throw ParseError(ParseError::Kind::CorruptPacket, "packet: truncated");
  }
  const uint16_t v = static_cast<uint16_t>(b[pos] | (b[pos + 1] << 8));
  pos += 2;
  return v;
}

uint32_t get_u32(std::span<const uint8_t> b, size_t& pos) {
  if (pos + 4 > b.size()) {
    throw ParseError(ParseError::Kind::CorruptPacket, "packet: truncated");
  }
  const uint32_t v = static_cast<uint32_t>(b[pos]) |
                     (static_cast<uint32_t>(b[pos + 1]) << 8) |
                     (static_cast<uint32_t>(b[pos + 2]) << 16) |
                     (static_cast<uint32_t>(b[pos + 3]) << 24);
  pos += 4;
  return v;
}

}  // namespace

std::vector<uint8_t> serialize(const Packet& pkt) {
  validate_packet(pkt);
  std::vector<uint8_t> buf;
  buf.reserve(10 + pkt.mask_bitmap.size() + pkt.payload.size() * 4);
  put_u32(buf, pkt.image_id);
  put_u16(buf, pkt.num_patches);
  put_u16(buf, pkt.token_dim);
  put_u16(buf, pkt.n_selected);
  buf.insert(buf.end(), pkt.mask_bitmap.begin(), pkt.mask_bitmap.end());
  for (float v : pkt.payload) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
  }
  return buf;
}

Packet deserialize(std::span<const uint8_t> bytes) {
  size_t pos = 0;
  Packet pkt;
  pkt.image_id = get_u32(bytes, pos);
  pkt.num_patches = get_u16(bytes, pos);
  pkt.token_dim = get_u16(bytes, pos);
  pkt.n_selected = get_u16(bytes, pos);
  const size_t bitmap_len = (static_cast<size_t>(pkt.num_patches) + 7) / 8;
  if (pos + bitmap_len > bytes.size()) {
    throw ParseError(ParseError::Kind::CorruptPacket, "packet: truncated bitmap");
  }
  pkt.mask_bitmap.assign(bytes.begin() + pos, bytes.begin() + pos + bitmap_len);
  pos += bitmap_len;
  const size_t payload_len =
      static_cast<size_t>(pkt.n_selected) * pkt.token_dim;
  if (pos + payload_len * 4 > bytes.size()) {
    throw ParseError(ParseError::Kind::CorruptPacket,
                     "packet: truncated payload");
  }
  pkt.payload.resize(payload_len);
  for (size_t i = 0; i < payload_len; ++i) {
    const uint32_t bits = get_u32(bytes, pos);
    std::memcpy(&pkt.payload[i], &bits, 4);
  }
  if (pos != bytes.size()) {
    throw ParseError(ParseError::Kind::CorruptPacket,
                     "packet: trailing bytes");
  }
  validate_packet(pkt);
  return pkt;
}

void write_packet(const Packet& pkt, const std::string& path) {
  auto bytes = serialize(pkt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Packet read_packet(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

size_t packet_payload_bits(const Packet& pkt) {
  // Header: id + P + D + n_selected. The positional-mask bitmap is not
  // charged against the budget.
  return pkt.payload.size() * 32 + 10 * 8;
}

double ChannelModel::rate_at(size_t step) const {
  if (schedule.empty()) {
    throw std::invalid_argument("channel: empty schedule");
  }
  if (schedule.size() == 1) return schedule[0];
  if (step >= schedule.size()) {
    throw std::invalid_argument("channel: no schedule entry at step " +
                                std::to_string(step));
  }
  return schedule[step];
}

void ChannelModel::validate() const {
  if (schedule.empty()) {
    throw std::invalid_argument("channel: empty schedule");
  }
  for (double r : schedule) {
    if (!(r > 0.0) || r > 1.0) {
      throw std::invalid_argument("channel: rate must be in (0,1]");
    }
  }
}

Packet transmit(const ChannelModel& channel, size_t step, const Tensor& z,
                const ClsAttentionGrid& grid, double alpha, uint64_t mask_seed,
                uint32_t image_id) {
  const double rate = channel.rate_at(step);
  const size_t budget = budget_for_rate(rate, grid.rows() * grid.cols());
  SelectionMask mask = build_mask(grid, budget, alpha, mask_seed);
  return pack(z, mask, image_id);
}

}  // namespace semcom
