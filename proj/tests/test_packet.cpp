#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "semcom/errors.hpp"
#include "semcom/masker.hpp"
#include "semcom/packet.hpp"
#include "semcom/rng.hpp"

using namespace semcom;

namespace {

Tensor token_matrix(size_t d, size_t p, Rng& rng) {
  // CLS column gets a recognizable constant so its absence is checkable.
  Tensor z = Tensor::rand_uniform({d, p + 1}, rng, -1, 1);
  auto data = z.mutable_data();
  for (size_t r = 0; r < d; ++r) data[r * (p + 1)] = 999.0f;
  return z;
}

SelectionMask mask_of(std::vector<size_t> indices, size_t rows, size_t cols) {
  SelectionMask mask;
  mask.rows = rows;
  mask.cols = cols;
  mask.flat.assign(rows * cols, 0);
  for (size_t i : indices) mask.flat[i] = 1;
  mask.n_selected = indices.size();
  return mask;
}

Packet random_packet(Rng& rng) {
  const size_t rows = 1 + rng.uniform_index(6);
  const size_t cols = 1 + rng.uniform_index(6);
  const size_t p = rows * cols;
  const size_t d = 1 + rng.uniform_index(12);
  Tensor z = Tensor::rand_uniform({d, p + 1}, rng, -5, 5);
  std::vector<size_t> indices;
  for (size_t i = 0; i < p; ++i) {
    if (rng.uniform() < 0.5) indices.push_back(i);
  }
  return pack(z, mask_of(indices, rows, cols),
              static_cast<uint32_t>(rng.next_u64()));
}

}  // namespace

TEST_CASE("budget_for_rate") {
  CHECK(budget_for_rate(0.5, 16) == 8);
  CHECK(budget_for_rate(1.0, 16) == 16);
  CHECK(budget_for_rate(0.25, 2400) == 600);
  CHECK(budget_for_rate(0.75, 16) == 12);
  CHECK(budget_for_rate(0.3, 16) == 4);  // floor(4.8)
  CHECK_THROWS_AS(budget_for_rate(0.0, 16), std::invalid_argument);
  CHECK_THROWS_AS(budget_for_rate(-0.5, 16), std::invalid_argument);
  CHECK_THROWS_AS(budget_for_rate(1.5, 16), std::invalid_argument);
}

TEST_CASE("pack: full mask carries every patch token but never the CLS") {
  Rng rng(1);
  Tensor z = token_matrix(4, 16, rng);
  Packet pkt = pack(z, all_ones_mask(4, 4), 7);
  CHECK(pkt.image_id == 7);
  CHECK(pkt.num_patches == 16);
  CHECK(pkt.token_dim == 4);
  CHECK(pkt.n_selected == 16);
  CHECK(pkt.payload.size() == 16 * 4);
  for (float v : pkt.payload) CHECK(v != 999.0f);
  // Token i on the wire equals column i+1 of z.
  for (size_t i = 0; i < 16; ++i) {
    for (size_t r = 0; r < 4; ++r) {
      CHECK(pkt.payload[i * 4 + r] == z.at({r, i + 1}));
    }
  }
}

TEST_CASE("pack: empty mask gives an empty payload") {
  Rng rng(2);
  Tensor z = token_matrix(4, 16, rng);
  Packet pkt = pack(z, mask_of({}, 4, 4), 1);
  CHECK(pkt.n_selected == 0);
  CHECK(pkt.payload.empty());
}

TEST_CASE("pack: payload order is ascending 1D index") {
  Rng rng(3);
  Tensor z = token_matrix(3, 16, rng);
  Packet pkt = pack(z, mask_of({5, 0}, 4, 4), 2);
  REQUIRE(pkt.payload.size() == 6);
  for (size_t r = 0; r < 3; ++r) {
    CHECK(pkt.payload[r] == z.at({r, 1}));      // patch 0 first
    CHECK(pkt.payload[3 + r] == z.at({r, 6}));  // then patch 5
  }
}

TEST_CASE("unpack scatters payload and zero-fills the rest, bit-exact") {
  Rng rng(4);
  Tensor z = token_matrix(5, 16, rng);
  SelectionMask mask = mask_of({1, 7, 15}, 4, 4);
  Packet pkt = pack(z, mask, 3);
  auto [zhat, mask2] = unpack(pkt, 4, 4);
  REQUIRE(zhat.shape() == Shape{5, 16});
  CHECK(mask2.flat == mask.flat);
  for (size_t i = 0; i < 16; ++i) {
    for (size_t r = 0; r < 5; ++r) {
      const float expected = mask.selected(i) ? z.at({r, i + 1}) : 0.0f;
      const float got = zhat.at({r, i});
      CHECK(std::memcmp(&expected, &got, 4) == 0);
    }
  }
}

TEST_CASE("unpack rejects inconsistent packets without partial results") {
  Rng rng(5);
  Tensor z = token_matrix(4, 16, rng);
  Packet pkt = pack(z, mask_of({2, 3, 8}, 4, 4), 1);

  Packet wrong_count = pkt;
  wrong_count.n_selected = 2;
  CHECK_THROWS_AS(unpack(wrong_count, 4, 4), ParseError);

  Packet short_payload = pkt;
  short_payload.payload.resize(2 * 4);
  CHECK_THROWS_AS(unpack(short_payload, 4, 4), ParseError);

  Packet trailing_bits = pkt;
  trailing_bits.mask_bitmap = {0xFF, 0xFF, 0xFF};
  CHECK_THROWS_AS(unpack(trailing_bits, 4, 4), ParseError);

  CHECK_THROWS_AS(unpack(pkt, 2, 4), std::invalid_argument);
}

TEST_CASE("serialize/deserialize round-trips bit-exactly") {
  Rng rng(6);
  for (int k = 0; k < 50; ++k) {
    Packet pkt = random_packet(rng);
    auto bytes = serialize(pkt);
    Packet back = deserialize(bytes);
    auto bytes2 = serialize(back);
    CHECK(bytes == bytes2);
    CHECK(back.image_id == pkt.image_id);
    CHECK(back.payload.size() == pkt.payload.size());
    for (size_t i = 0; i < pkt.payload.size(); ++i) {
      CHECK(std::memcmp(&back.payload[i], &pkt.payload[i], 4) == 0);
    }
  }
}

TEST_CASE("deserialize rejects corrupted buffers") {
  Rng rng(7);
  Packet pkt = random_packet(rng);
  auto bytes = serialize(pkt);

  auto expect_corrupt = [](const std::vector<uint8_t>& b) {
    try {
      deserialize(b);
      CHECK(false);
    } catch (const ParseError& e) {
      CHECK(e.kind() == ParseError::Kind::CorruptPacket);
    }
  };

  // Truncations at every boundary class.
  expect_corrupt({});
  expect_corrupt(std::vector<uint8_t>(bytes.begin(), bytes.begin() + 3));
  expect_corrupt(std::vector<uint8_t>(bytes.begin(), bytes.begin() + 9));
  if (bytes.size() > 12) {
    expect_corrupt(std::vector<uint8_t>(bytes.begin(), bytes.end() - 1));
  }
  // Trailing garbage.
  auto extended = bytes;
  extended.push_back(0xAB);
  expect_corrupt(extended);
}

TEST_CASE("packet files round-trip") {
  Rng rng(8);
  Packet pkt = random_packet(rng);
  const std::string path = "pkt_roundtrip.bin";
  write_packet(pkt, path);
  Packet back = read_packet(path);
  CHECK(serialize(back) == serialize(pkt));
  std::remove(path.c_str());
}

TEST_CASE("payload bitrate accounting excludes the mask bitmap") {
  Rng rng(9);
  Tensor z = token_matrix(6, 16, rng);
  Packet pkt = pack(z, mask_of({0, 1, 2}, 4, 4), 1);
  CHECK(packet_payload_bits(pkt) == 3 * 6 * 32 + 80);
  Packet empty = pack(z, mask_of({}, 4, 4), 1);
  CHECK(packet_payload_bits(empty) == 80);
}

TEST_CASE("channel model: schedules and validation") {
  ChannelModel fixed = ChannelModel::fixed(0.5);
  CHECK(fixed.rate_at(0) == 0.5);
  CHECK(fixed.rate_at(100) == 0.5);

  ChannelModel sched{{0.5, 0.25}};
  CHECK(sched.rate_at(0) == 0.5);
  CHECK(sched.rate_at(1) == 0.25);
  CHECK_THROWS_AS(sched.rate_at(2), std::invalid_argument);

  ChannelModel bad{{0.5, 1.5}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ChannelModel empty{{}};
  CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
}

TEST_CASE("transmit composes budget, mask, and pack") {
  Rng rng(10);
  Tensor z = token_matrix(4, 16, rng);
  std::vector<float> scores(16);
  for (float& v : scores) v = static_cast<float>(rng.uniform());
  ClsAttentionGrid grid;
  grid.scores = Tensor::from_data({4, 4}, scores);

  Packet full = transmit(ChannelModel::fixed(1.0), 0, z, grid, 1.0, 5, 42);
  CHECK(full.n_selected == 16);
  CHECK(full.image_id == 42);

  ChannelModel sched{{0.5, 0.25}};
  Packet p0 = transmit(sched, 0, z, grid, 1.0, 5, 1);
  Packet p1 = transmit(sched, 1, z, grid, 1.0, 5, 1);
  CHECK(p0.n_selected == 8);
  CHECK(p1.n_selected == 4);

  Packet again = transmit(sched, 0, z, grid, 1.0, 5, 1);
  CHECK(serialize(p0) == serialize(again));
}
