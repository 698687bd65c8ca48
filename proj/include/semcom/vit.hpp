#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semcom/dataset.hpp"
#include "semcom/optim.hpp"
#include "semcom/patches.hpp"
#include "semcom/tensor.hpp"

namespace semcom {

struct VitConfig {
  size_t embed_dim = 32;   // D
  size_t heads = 4;        // H
  size_t layers = 2;       // K
  size_t mlp_hidden = 64;
  size_t num_classes = 4;
  size_t image_h = 32;
  size_t image_w = 32;
  size_t patch = 8;
  // Attention scores scaled by 1/sqrt(D) when true (the conventional
  // alternative is 1/sqrt(D/H)).
  bool scale_full_dim = true;
  float init_std = 0.02f;

  size_t patches() const { return (image_h / patch) * (image_w / patch); }
  size_t grid_rows() const { return image_h / patch; }
  size_t grid_cols() const { return image_w / patch; }
  void validate() const;  // throws std::invalid_argument
};

// One attention head over a row chunk x_h (D/H, P+1) with weights
// (D/H, D/H). Returns the head output (D/H, P+1) and the row-stochastic
// score matrix (P+1, P+1); rows index queries, columns keys. Scores are
// scaled by 1/sqrt(scale_dim).
std::pair<Tensor, Tensor> attention_head(const Tensor& x_h, const Tensor& wq,
                                         const Tensor& wk, const Tensor& wv,
                                         size_t scale_dim);

struct LayerParams {
  struct Head {
    Parameter wq, wk, wv;
  };
  std::vector<Head> heads;
  Parameter attn_out_w, attn_out_b;
  Parameter ln1_g, ln1_b, ln2_g, ln2_b;
  Parameter mlp_w1, mlp_b1, mlp_w2, mlp_b2;

  LayerParams(size_t layer_index, const VitConfig& cfg, Rng& rng);
  std::vector<Parameter*> parameters();
};

// Pre-norm transformer block: x + MHA(LN(x)) then + MLP(LN(.)).
// attn_capture, when non-null, receives the detached per-head score
// matrices of this layer.
Tensor transformer_layer(const Tensor& x, LayerParams& params,
                         const VitConfig& cfg,
                         std::vector<Tensor>* attn_capture = nullptr);

struct EncoderOutput {
  TokenMatrix z;     // (D, P+1)
  Tensor attention;  // (H, P+1, P+1), detached, final layer
  Tensor logits;     // (num_classes)
};

class EncoderModel {
 public:
  EncoderModel(VitConfig cfg, uint64_t seed);

  const VitConfig& config() const { return cfg_; }
  std::vector<Parameter*> parameters();

  EncoderOutput encode(const Tensor& image);

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  VitConfig cfg_;
  ProjectorParams proj_;
  std::vector<LayerParams> layers_;
  Parameter pred_w_, pred_b_;
  Parameter meta_trained_;
  bool trained_ = false;
};

struct TrainOptions {
  size_t epochs = 30;
  size_t batch_size = 8;
  // From-scratch toy training needs a hotter step than the 5e-4 used with a
  // pretrained backbone; 2e-3 reaches full train accuracy within 30 epochs.
  float lr = 2e-3f;
  uint64_t seed = 0;
};

struct EpochStats {
  size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

// Minimizes mean cross-entropy with Adam over all encoder parameters.
// Loss is the running mean over the epoch's batches; accuracy is a full
// post-epoch pass. Deterministic for a given seed.
std::vector<EpochStats> train_encoder(EncoderModel& model, const Dataset& data,
                                      const TrainOptions& opt);

}  // namespace semcom
