#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "semcom/dataset.hpp"
#include "semcom/optim.hpp"
#include "semcom/tensor.hpp"
#include "semcom/vit.hpp"

namespace semcom {

struct ClassifierConfig {
  size_t num_classes = 4;
  size_t image_h = 32;
  size_t image_w = 32;

  void validate() const;
};

// Receiver-side classifier: three stride-2 conv blocks (16/32/64, ReLU),
// global average pool, affine head.
class ClassifierModel {
 public:
  ClassifierModel(ClassifierConfig cfg, uint64_t seed);

  const ClassifierConfig& config() const { return cfg_; }
  std::vector<Parameter*> parameters();

  Tensor forward(const Tensor& image);  // -> logits (num_classes)

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  ClassifierConfig cfg_;
  Parameter conv1_w_, conv1_b_, conv2_w_, conv2_b_, conv3_w_, conv3_b_;
  Parameter fc_w_, fc_b_;
};

// Cross-entropy training on original images. Loss is the epoch's running
// mean; accuracy is a full post-epoch pass over the dataset.
std::vector<EpochStats> pretrain_classifier(ClassifierModel& model,
                                            const Dataset& data, size_t epochs,
                                            uint64_t seed,
                                            size_t batch_size = 8,
                                            float lr = 5e-4f);

// Fraction of argmax-correct predictions; ties resolve to the lowest class
// index. Throws on an empty image set.
double evaluate(ClassifierModel& model, const std::vector<LabeledImage>& images);

// Produces the receiver-side reconstruction of an image; the seed feeds the
// mask's random-fill stage.
using ReconstructFn =
    std::function<Tensor(const LabeledImage& image, uint64_t seed)>;

struct FineTuneConfig {
  double beta = 0.3;
  size_t epochs = 10;
  uint64_t seed = 0;
  double rate = 0.5;   // informational: rate the pipeline was built with
  size_t batch_size = 8;
  float lr = 5e-4f;
};

struct FineTuneStats {
  size_t epoch = 0;
  double loss = 0.0;
  double accuracy_original = 0.0;
  double accuracy_compressed = 0.0;
};

// Per image, loss = beta * CE(y(X), c) + (1-beta) * CE(y(Xhat), c) with Xhat
// drawn from the frozen pipeline under a fresh per-epoch seed. Adam on the
// classifier only.
std::vector<FineTuneStats> finetune(ClassifierModel& model, const Dataset& data,
                                    const ReconstructFn& reconstruct,
                                    const FineTuneConfig& cfg);

}  // namespace semcom
