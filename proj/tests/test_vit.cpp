#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>

#include "semcom/dataset.hpp"
#include "semcom/grad_check.hpp"
#include "semcom/ops.hpp"
#include "semcom/rng.hpp"
#include "semcom/vit.hpp"

using namespace semcom;

namespace {

VitConfig micro_config() {
  VitConfig cfg;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.mlp_hidden = 16;
  cfg.num_classes = 4;
  cfg.image_h = 16;
  cfg.image_w = 16;
  cfg.patch = 8;  // P = 4
  // Healthy token spread keeps the layer norms well away from the
  // near-constant-column regime where finite differences lose accuracy.
  cfg.init_std = 0.5f;
  return cfg;
}

Parameter* find_param(std::vector<Parameter*> params, const std::string& name) {
  for (Parameter* p : params) {
    if (p->name == name) return p;
  }
  REQUIRE(false);
  return nullptr;
}

}  // namespace

TEST_CASE("config validation") {
  VitConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.layers = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = VitConfig{};
  cfg.embed_dim = 30;  // not divisible by 4 heads
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = VitConfig{};
  cfg.image_h = 30;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  // Paper-scale constants are accepted by validation.
  cfg = VitConfig{};
  cfg.embed_dim = 384;
  cfg.heads = 6;
  cfg.layers = 12;
  cfg.image_h = 320;
  cfg.image_w = 480;
  cfg.num_classes = 200;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.patches() == 2400);
}

TEST_CASE("attention_head: zero queries give uniform attention") {
  Rng rng(1);
  Tensor x = Tensor::rand_uniform({4, 5}, rng, -1, 1);
  Tensor wq = Tensor::zeros({4, 4});
  Tensor wk = Tensor::randn({4, 4}, rng, 0.5f);
  Tensor wv = Tensor::randn({4, 4}, rng, 0.5f);
  auto [out, attn] = attention_head(x, wq, wk, wv, 8);
  for (size_t i = 0; i < 5; ++i) {
    for (size_t j = 0; j < 5; ++j) {
      CHECK(attn.at({i, j}) == doctest::Approx(0.2).epsilon(1e-6));
    }
  }
  // Every output column is the mean of the value vectors.
  Tensor v = matmul(wv, x);
  for (size_t r = 0; r < 4; ++r) {
    double mean_v = 0.0;
    for (size_t j = 0; j < 5; ++j) mean_v += v.at({r, j});
    mean_v /= 5.0;
    for (size_t i = 0; i < 5; ++i) {
      CHECK(out.at({r, i}) == doctest::Approx(mean_v).epsilon(1e-5));
    }
  }
}

TEST_CASE("attention_head: single-token case is the identity mix") {
  Rng rng(2);
  Tensor x = Tensor::rand_uniform({2, 1}, rng, -1, 1);
  Tensor wq = Tensor::randn({2, 2}, rng, 0.5f);
  Tensor wk = Tensor::randn({2, 2}, rng, 0.5f);
  Tensor wv = Tensor::randn({2, 2}, rng, 0.5f);
  auto [out, attn] = attention_head(x, wq, wk, wv, 2);
  CHECK(attn.shape() == Shape{1, 1});
  CHECK(attn[0] == doctest::Approx(1.0));
  Tensor v = matmul(wv, x);
  for (size_t r = 0; r < 2; ++r) {
    CHECK(out.at({r, 0}) == doctest::Approx(v.at({r, 0})).epsilon(1e-6));
  }
}

TEST_CASE("attention_head matches a dense oracle") {
  Rng rng(3);
  const size_t dh = 4, n = 3, full_dim = 8;
  Tensor x = Tensor::rand_uniform({dh, n}, rng, -1, 1);
  Tensor wq = Tensor::randn({dh, dh}, rng, 0.5f);
  Tensor wk = Tensor::randn({dh, dh}, rng, 0.5f);
  Tensor wv = Tensor::randn({dh, dh}, rng, 0.5f);
  auto [out, attn] = attention_head(x, wq, wk, wv, full_dim);

  // Oracle: direct dense evaluation in double.
  auto mm = [&](const Tensor& a, const Tensor& b, size_t m, size_t k,
                size_t nn) {
    std::vector<double> r(m * nn, 0.0);
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < nn; ++j)
        for (size_t l = 0; l < k; ++l)
          r[i * nn + j] += static_cast<double>(a[i * k + l]) * b[l * nn + j];
    return r;
  };
  auto q = mm(wq, x, dh, dh, n);
  auto k = mm(wk, x, dh, dh, n);
  auto v = mm(wv, x, dh, dh, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(full_dim));
  std::vector<double> a_ref(n * n);
  for (size_t i = 0; i < n; ++i) {
    double mx = -1e300;
    for (size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (size_t l = 0; l < dh; ++l) dot += q[l * n + i] * k[l * n + j];
      a_ref[i * n + j] = dot * scale;
      mx = std::max(mx, a_ref[i * n + j]);
    }
    double denom = 0.0;
    for (size_t j = 0; j < n; ++j) denom += std::exp(a_ref[i * n + j] - mx);
    for (size_t j = 0; j < n; ++j) {
      a_ref[i * n + j] = std::exp(a_ref[i * n + j] - mx) / denom;
    }
  }
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      CHECK(attn.at({i, j}) == doctest::Approx(a_ref[i * n + j]).epsilon(1e-5));
    }
  }
  for (size_t r = 0; r < dh; ++r) {
    for (size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (size_t j = 0; j < n; ++j) acc += v[r * n + j] * a_ref[i * n + j];
      CHECK(out.at({r, i}) == doctest::Approx(acc).epsilon(1e-5));
    }
  }
}

TEST_CASE("transformer_layer: zero residual branches give the identity") {
  VitConfig cfg = micro_config();
  Rng rng(4);
  LayerParams lp(0, cfg, rng);
  for (float& v : lp.attn_out_w.tensor.mutable_data()) v = 0.0f;
  for (float& v : lp.mlp_w2.tensor.mutable_data()) v = 0.0f;
  Tensor x = Tensor::rand_uniform({cfg.embed_dim, 5}, rng, -1, 1);
  Tensor y = transformer_layer(x, lp, cfg);
  for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("transformer_layer keeps the (D, P+1) shape") {
  VitConfig cfg = micro_config();
  Rng rng(5);
  LayerParams lp(0, cfg, rng);
  Tensor x = Tensor::rand_uniform({cfg.embed_dim, 5}, rng, -1, 1);
  CHECK(transformer_layer(x, lp, cfg).shape() == Shape{cfg.embed_dim, 5});
  Tensor bad = Tensor::zeros({cfg.embed_dim + 1, 5});
  CHECK_THROWS_AS(transformer_layer(bad, lp, cfg), std::invalid_argument);
}

TEST_CASE("transformer_layer input gradient passes finite differences") {
  VitConfig cfg = micro_config();
  Rng rng(6);
  LayerParams lp(0, cfg, rng);
  Tensor x = Tensor::rand_uniform({cfg.embed_dim, 4}, rng, -1, 1);
  auto f = [&lp, &cfg](std::vector<Tensor>& in) {
    return sum(mul(transformer_layer(in[0], lp, cfg),
                   transformer_layer(in[0], lp, cfg)));
  };
  CHECK(grad_check(f, {x}) < 1e-4);
}

TEST_CASE("encode: deterministic outputs and row-stochastic attention") {
  VitConfig cfg = micro_config();
  EncoderModel model(cfg, 11);
  Rng rng(12);
  Tensor img = Tensor::rand_uniform({3, 16, 16}, rng, 0, 1);
  EncoderOutput a = model.encode(img);
  EncoderOutput b = model.encode(img);
  CHECK(std::equal(a.z.data().begin(), a.z.data().end(), b.z.data().begin()));
  CHECK(std::equal(a.logits.data().begin(), a.logits.data().end(),
                   b.logits.data().begin()));

  EncoderModel model2(cfg, 11);
  EncoderOutput c = model2.encode(img);
  CHECK(std::equal(a.z.data().begin(), a.z.data().end(), c.z.data().begin()));

  REQUIRE(a.attention.shape() == Shape{2, 5, 5});
  for (size_t h = 0; h < 2; ++h) {
    for (size_t i = 0; i < 5; ++i) {
      double row = 0.0;
      for (size_t j = 0; j < 5; ++j) {
        const float v = a.attention.at({h, i, j});
        CHECK(v >= 0.0f);
        row += v;
      }
      CHECK(std::fabs(row - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("token permutation with matching positional embeddings permutes z") {
  VitConfig cfg;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.mlp_hidden = 32;
  cfg.num_classes = 3;
  cfg.image_h = 16;
  cfg.image_w = 32;
  cfg.patch = 8;  // grid 2x4, P = 8
  EncoderModel model(cfg, 21);
  Rng rng(22);
  Tensor img = Tensor::rand_uniform({3, cfg.image_h, cfg.image_w}, rng, 0, 1);
  EncoderOutput base = model.encode(img);

  // Permutation over patch indices: rotate by 3.
  const size_t p_count = cfg.patches();
  std::vector<size_t> perm(p_count);
  for (size_t i = 0; i < p_count; ++i) perm[i] = (i + 3) % p_count;

  // New image whose patch j is old patch perm[j].
  PatchGrid grid = patchify(img, cfg.patch);
  PatchGrid shuffled = grid;
  std::vector<float> pdata(grid.patches.data().begin(),
                           grid.patches.data().end());
  const size_t stride = 3 * cfg.patch * cfg.patch;
  std::vector<float> sdata(pdata.size());
  for (size_t j = 0; j < p_count; ++j) {
    std::copy(pdata.begin() + perm[j] * stride,
              pdata.begin() + (perm[j] + 1) * stride,
              sdata.begin() + j * stride);
  }
  shuffled.patches = Tensor::from_data(grid.patches.shape(), std::move(sdata));
  Tensor img2 = reassemble(shuffled);

  // Permute the positional embedding columns the same way (CLS stays).
  Parameter* pos = find_param(model.parameters(), "proj.pos");
  std::vector<float> pos_orig(pos->tensor.data().begin(),
                              pos->tensor.data().end());
  auto pos_data = pos->tensor.mutable_data();
  const size_t d = cfg.embed_dim, cols = p_count + 1;
  for (size_t r = 0; r < d; ++r) {
    for (size_t j = 0; j < p_count; ++j) {
      pos_data[r * cols + 1 + j] = pos_orig[r * cols + 1 + perm[j]];
    }
  }
  EncoderOutput permuted = model.encode(img2);

  for (size_t r = 0; r < d; ++r) {
    CHECK(permuted.z.at({r, 0}) ==
          doctest::Approx(base.z.at({r, 0})).epsilon(1e-4));
    for (size_t j = 0; j < p_count; ++j) {
      CHECK(permuted.z.at({r, 1 + j}) ==
            doctest::Approx(base.z.at({r, 1 + perm[j]})).epsilon(1e-4));
    }
  }
  for (size_t c = 0; c < cfg.num_classes; ++c) {
    CHECK(permuted.logits[c] ==
          doctest::Approx(base.logits[c]).epsilon(1e-4));
  }
}

TEST_CASE("full micro ViT gradient check") {
  for (uint64_t seed = 0; seed < 3; ++seed) {
    VitConfig cfg = micro_config();
    EncoderModel model(cfg, derive_seed(31, seed));
    Rng rng(derive_seed(32, seed));
    Tensor img = Tensor::rand_uniform({3, 16, 16}, rng, 0, 1);
    std::vector<Tensor> inputs;
    for (Parameter* p : model.parameters()) inputs.push_back(p->tensor);
    auto f = [&model, &img](std::vector<Tensor>&) {
      return cross_entropy(model.encode(img).logits, 2);
    };
    CHECK(grad_check(f, inputs, 1e-3, 64, derive_seed(33, seed)) < 1e-3);
  }
}

TEST_CASE("train_encoder memorizes a single image") {
  Dataset ds = generate_synthetic(4, 1, 32, 32, 7);
  ds.images.resize(1);
  VitConfig cfg;
  EncoderModel model(cfg, 1);
  TrainOptions opt;
  opt.epochs = 200;
  opt.batch_size = 1;
  opt.lr = 5e-4f;  // paper step size suffices for memorization
  opt.seed = 1;
  auto log = train_encoder(model, ds, opt);
  CHECK(log.back().loss < 0.01);
  CHECK(model.trained());
}

TEST_CASE("train_encoder reaches 90% on a small toy set and is deterministic") {
  Dataset ds = generate_synthetic(4, 8, 32, 32, 1);
  auto run = [&]() {
    VitConfig cfg;
    EncoderModel model(cfg, 3);
    TrainOptions opt;
    opt.epochs = 40;
    opt.batch_size = 2;  // small set; keep the optimizer step count up
    opt.seed = 3;
    return train_encoder(model, ds, opt);
  };
  auto log1 = run();
  auto log2 = run();
  REQUIRE(log1.size() == log2.size());
  for (size_t i = 0; i < log1.size(); ++i) {
    CHECK(std::memcmp(&log1[i].loss, &log2[i].loss, sizeof(double)) == 0);
    CHECK(log1[i].accuracy == log2[i].accuracy);
  }
  CHECK(log1.back().accuracy >= 0.9);
}

TEST_CASE("train_encoder rejects an empty dataset") {
  Dataset ds;
  ds.num_classes = 4;
  VitConfig cfg;
  EncoderModel model(cfg, 1);
  CHECK_THROWS_AS(train_encoder(model, ds, TrainOptions{}),
                  std::invalid_argument);
}

TEST_CASE("encoder save/load roundtrip preserves weights and trained flag") {
  VitConfig cfg = micro_config();
  EncoderModel model(cfg, 5);
  model.mark_trained();
  const std::string path = "enc_roundtrip.semc";
  model.save(path);
  EncoderModel loaded(cfg, 99);
  CHECK_FALSE(loaded.trained());
  loaded.load(path);
  CHECK(loaded.trained());
  Rng rng(6);
  Tensor img = Tensor::rand_uniform({3, 16, 16}, rng, 0, 1);
  EncoderOutput a = model.encode(img);
  EncoderOutput b = loaded.encode(img);
  CHECK(std::equal(a.logits.data().begin(), a.logits.data().end(),
                   b.logits.data().begin()));
  std::remove(path.c_str());
}
