#include "semcom/classifier.hpp"

#include <cmath>
#include <stdexcept>

#include "semcom/checkpoint.hpp"
#include "semcom/ops.hpp"
#include "semcom/rng.hpp"

namespace semcom {

void ClassifierConfig::validate() const {
  if (num_classes < 2) {
    throw std::invalid_argument("classifier config: need at least 2 classes");
  }
  if (image_h < 8 || image_w < 8) {
    throw std::invalid_argument("classifier config: image too small");
  }
}

namespace {

Tensor he_normal(Shape shape, size_t fan_in, Rng& rng) {
  const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
  return Tensor::randn(std::move(shape), rng, std);
}

}  // namespace

ClassifierModel::ClassifierModel(ClassifierConfig cfg, uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      conv1_w_("conv1.w", Tensor()),
      conv1_b_("conv1.b", Tensor::zeros({16})),
      conv2_w_("conv2.w", Tensor()),
      conv2_b_("conv2.b", Tensor::zeros({32})),
      conv3_w_("conv3.w", Tensor()),
      conv3_b_("conv3.b", Tensor::zeros({64})),
      fc_w_("fc.w", Tensor()),
      fc_b_("fc.b", Tensor::zeros({cfg.num_classes})) {
  Rng rng(derive_seed(seed, 0x636c66));
  conv1_w_ = Parameter("conv1.w", he_normal({16, 3, 3, 3}, 3 * 9, rng));
  conv2_w_ = Parameter("conv2.w", he_normal({32, 16, 3, 3}, 16 * 9, rng));
  conv3_w_ = Parameter("conv3.w", he_normal({64, 32, 3, 3}, 32 * 9, rng));
  fc_w_ = Parameter("fc.w", Tensor::randn({cfg_.num_classes, 64}, rng, 0.02f));
}

std::vector<Parameter*> ClassifierModel::parameters() {
  return {&conv1_w_, &conv1_b_, &conv2_w_, &conv2_b_,
          &conv3_w_, &conv3_b_, &fc_w_,    &fc_b_};
}

Tensor ClassifierModel::forward(const Tensor& image) {
  if (image.rank() != 3 || image.extent(0) != 3 ||
      image.extent(1) != cfg_.image_h || image.extent(2) != cfg_.image_w) {
    throw std::invalid_argument("classifier: image shape " +
                                shape_str(image.shape()) +
                                " does not match config");
  }
  Tensor x = relu(conv2d(image, conv1_w_.tensor, conv1_b_.tensor, 2, 1));
  x = relu(conv2d(x, conv2_w_.tensor, conv2_b_.tensor, 2, 1));
  x = relu(conv2d(x, conv3_w_.tensor, conv3_b_.tensor, 2, 1));
  Tensor pooled = reshape(global_avg_pool(x), {static_cast<size_t>(64), 1});
  return reshape(add_col_bias(matmul(fc_w_.tensor, pooled), fc_b_.tensor),
                 {cfg_.num_classes});
}

void ClassifierModel::save(const std::string& path) const {
  auto* self = const_cast<ClassifierModel*>(this);
  save_checkpoint(self->parameters(), path);
}

void ClassifierModel::load(const std::string& path) {
  load_checkpoint_into(path, parameters());
}

std::vector<EpochStats> pretrain_classifier(ClassifierModel& model,
                                            const Dataset& data, size_t epochs,
                                            uint64_t seed, size_t batch_size,
                                            float lr) {
  if (data.images.empty()) {
    throw std::invalid_argument("pretrain_classifier: empty dataset");
  }
  AdamConfig acfg;
  acfg.lr = lr;
  AdamOptimizer adam(model.parameters(), acfg);

  std::vector<size_t> order(data.images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<EpochStats> log;
  for (size_t epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, epoch, 0x636873));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += batch_size) {
      const size_t end = std::min(order.size(), start + batch_size);
      const float inv = 1.0f / static_cast<float>(end - start);
      adam.zero_grad();
      for (size_t k = start; k < end; ++k) {
        const LabeledImage& img = data.images[order[k]];
        Tensor loss = cross_entropy(model.forward(img.pixels), img.label);
        loss_sum += loss.value_f64();
        scale(loss, inv).backward();
      }
      adam.step();
    }
    log.push_back({epoch, loss_sum / static_cast<double>(data.images.size()),
                   evaluate(model, data.images)});
  }
  return log;
}

double evaluate(ClassifierModel& model,
                const std::vector<LabeledImage>& images) {
  if (images.empty()) {
    throw std::invalid_argument("evaluate: empty image set");
  }
  NoGradGuard no_grad;
  size_t correct = 0;
  for (const LabeledImage& img : images) {
    Tensor logits = model.forward(img.pixels);
    size_t best = 0;
    for (size_t c = 1; c < model.config().num_classes; ++c) {
      if (logits[c] > logits[best]) best = c;
    }
    if (best == img.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

std::vector<FineTuneStats> finetune(ClassifierModel& model, const Dataset& data,
                                    const ReconstructFn& reconstruct,
                                    const FineTuneConfig& cfg) {
  if (cfg.beta < 0.0 || cfg.beta > 1.0) {
    throw std::invalid_argument("finetune: beta outside [0,1]");
  }
  if (data.images.empty()) {
    throw std::invalid_argument("finetune: empty dataset");
  }
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  AdamOptimizer adam(model.parameters(), acfg);

  std::vector<size_t> order(data.images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  const float beta = static_cast<float>(cfg.beta);
  std::vector<FineTuneStats> log;
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, epoch, 0x667473));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      const float inv = 1.0f / static_cast<float>(end - start);
      adam.zero_grad();
      for (size_t k = start; k < end; ++k) {
        const LabeledImage& img = data.images[order[k]];
        // Fresh random-fill seed each epoch, as the receiver would see.
        Tensor recon =
            reconstruct(img, derive_seed(cfg.seed, epoch, img.id, 0x7263));
        Tensor ce_orig = cross_entropy(model.forward(img.pixels), img.label);
        Tensor ce_comp = cross_entropy(model.forward(recon), img.label);
        Tensor loss =
            add(scale(ce_orig, beta), scale(ce_comp, 1.0f - beta));
        loss_sum += loss.value_f64();
        scale(loss, inv).backward();
      }
      adam.step();
    }

    // Post-epoch accuracies on originals and on freshly reconstructed
    // compressed images (eval uses its own seed stream).
    std::vector<LabeledImage> compressed;
    compressed.reserve(data.images.size());
    for (const LabeledImage& img : data.images) {
      LabeledImage c;
      c.pixels = reconstruct(img, derive_seed(cfg.seed, 0x6576616c, img.id));
      c.label = img.label;
      c.id = img.id;
      compressed.push_back(std::move(c));
    }
    log.push_back({epoch, loss_sum / static_cast<double>(data.images.size()),
                   evaluate(model, data.images), evaluate(model, compressed)});
  }
  return log;
}

}  // namespace semcom
