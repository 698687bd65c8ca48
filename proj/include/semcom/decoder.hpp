#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semcom/dataset.hpp"
#include "semcom/masker.hpp"
#include "semcom/optim.hpp"
#include "semcom/tensor.hpp"
#include "semcom/vit.hpp"

namespace semcom {

struct DecoderConfig {
  size_t token_dim = 32;  // D
  size_t rows = 4;
  size_t cols = 4;
  size_t patch = 8;  // the conv stack upsamples by exactly 8

  void validate() const;
};

// (D, rows, cols) feature map -> three stride-2 transposed convolutions
// (widths D -> 64 -> 32 -> 16, kernel 4, ReLU) -> 1x1 projection to RGB ->
// sigmoid into [0,1].
class DecoderModel {
 public:
  DecoderModel(DecoderConfig cfg, uint64_t seed);

  const DecoderConfig& config() const { return cfg_; }
  std::vector<Parameter*> parameters();

  // zhat is (D, P) with zeros in untransmitted columns.
  Tensor decode(const Tensor& zhat);

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  DecoderConfig cfg_;
  Parameter up1_w_, up1_b_, up2_w_, up2_b_, up3_w_, up3_b_;
  Parameter out_w_, out_b_;
};

// Mean squared error over the pixels of selected patches only, i.e. the
// Kronecker-expanded mask applied to (x - xhat), normalized by
// n_selected * p^2 * 3. Zero for an empty mask. Differentiable.
Tensor masked_mse(const Tensor& x, const Tensor& xhat,
                  const SelectionMask& mask, size_t p);

struct ReconstructionReport {
  Tensor reconstruction;      // (3,h,w)
  double masked_mse = 0.0;
  Tensor per_patch_sqerr;     // (rows, cols), each patch's share of the loss
};

ReconstructionReport make_report(const Tensor& original,
                                 const Tensor& reconstruction,
                                 const SelectionMask& mask, size_t p);

struct DecoderTrainOptions {
  size_t epochs = 30;
  size_t batch_size = 8;
  float lr = 5e-4f;
  uint64_t seed = 0;
  double rate = 1.0;
  double alpha = 1.0;
  // Skips masking and the packet codec entirely: the decoder sees the raw
  // patch tokens and the loss uses an all-ones mask. Used to validate that
  // rate 1 is equivalent to no compressor.
  bool bypass_compressor = false;
};

// Per image: encode (frozen) -> attention mask -> pack/unpack -> decode ->
// masked MSE; Adam on decoder parameters only. The encoder must have been
// trained. Deterministic for a given seed.
std::vector<EpochStats> train_decoder(DecoderModel& decoder,
                                      EncoderModel& encoder,
                                      const Dataset& data,
                                      const DecoderTrainOptions& opt);

}  // namespace semcom
