#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "semcom/masker.hpp"
#include "semcom/tensor.hpp"

namespace semcom {

// Wire-format unit, little-endian on the wire:
//   image id u32, P u16, D u16, n_selected u16,
//   mask bitmap ceil(P/8) bytes, payload n_selected*D f32.
// Payload holds the selected patch tokens in ascending 1D index order; the
// CLS token is never transmitted.
struct Packet {
  uint32_t image_id = 0;
  uint16_t num_patches = 0;  // P
  uint16_t token_dim = 0;    // D
  uint16_t n_selected = 0;
  std::vector<uint8_t> mask_bitmap;
  std::vector<float> payload;
};

// floor(rate * P); rate 1 maps to P exactly. rate outside (0,1] throws.
size_t budget_for_rate(double rate, size_t num_patches);

// Selects columns 1..P of z (D, P+1) named by the mask.
Packet pack(const Tensor& z, const SelectionMask& mask, uint32_t image_id);

// Scatters the payload into a zero-initialized (D, P) matrix. rows*cols
// must equal P; the overload without dims assumes a square grid.
std::pair<Tensor, SelectionMask> unpack(const Packet& pkt, size_t rows,
                                        size_t cols);
std::pair<Tensor, SelectionMask> unpack(const Packet& pkt);

std::vector<uint8_t> serialize(const Packet& pkt);
// Throws ParseError(CorruptPacket) on any inconsistency; never returns a
// partial packet.
Packet deserialize(std::span<const uint8_t> bytes);

void write_packet(const Packet& pkt, const std::string& path);
Packet read_packet(const std::string& path);

// Payload accounting per the uniform per-patch rate model: token bits plus
// the fixed header, excluding the positional-mask bitmap.
size_t packet_payload_bits(const Packet& pkt);

// Per-image compression rates r in (0,1], indexed by transmission step.
struct ChannelModel {
  std::vector<double> schedule;

  static ChannelModel fixed(double rate) { return {{rate}}; }
  // Fixed-rate channels repeat their single entry forever.
  double rate_at(size_t step) const;
  void validate() const;
};

// budget_for_rate -> build_mask -> pack, with the channel's rate at `step`.
// The channel itself is lossless.
Packet transmit(const ChannelModel& channel, size_t step, const Tensor& z,
                const ClsAttentionGrid& grid, double alpha, uint64_t mask_seed,
                uint32_t image_id);

}  // namespace semcom
