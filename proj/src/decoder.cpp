#include "semcom/decoder.hpp"

#include <cmath>
#include <stdexcept>

#include "semcom/checkpoint.hpp"
#include "semcom/ops.hpp"
#include "semcom/packet.hpp"
#include "semcom/rng.hpp"

namespace semcom {

void DecoderConfig::validate() const {
  if (token_dim == 0 || rows == 0 || cols == 0) {
    throw std::invalid_argument("decoder config: zero dimension");
  }
  if (patch != 8) {
    throw std::invalid_argument(
        "decoder config: the conv stack upsamples by 8, patch must be 8");
  }
}

namespace {

Tensor he_normal(Shape shape, size_t fan_in, Rng& rng) {
  const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
  return Tensor::randn(std::move(shape), rng, std);
}

}  // namespace

DecoderModel::DecoderModel(DecoderConfig cfg, uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      up1_w_("up1.w", Tensor()),
      up1_b_("up1.b", Tensor::zeros({64})),
      up2_w_("up2.w", Tensor()),
      up2_b_("up2.b", Tensor::zeros({32})),
      up3_w_("up3.w", Tensor()),
      up3_b_("up3.b", Tensor::zeros({16})),
      out_w_("out.w", Tensor()),
      out_b_("out.b", Tensor::zeros({3})) {
  Rng rng(derive_seed(seed, 0x646563));
  const size_t d = cfg_.token_dim;
  up1_w_ = Parameter("up1.w", he_normal({d, 64, 4, 4}, d * 16, rng));
  up2_w_ = Parameter("up2.w", he_normal({64, 32, 4, 4}, 64 * 16, rng));
  up3_w_ = Parameter("up3.w", he_normal({32, 16, 4, 4}, 32 * 16, rng));
  out_w_ = Parameter("out.w", Tensor::randn({3, 16}, rng, 0.02f));
}

std::vector<Parameter*> DecoderModel::parameters() {
  return {&up1_w_, &up1_b_, &up2_w_, &up2_b_,
          &up3_w_, &up3_b_, &out_w_, &out_b_};
}

Tensor DecoderModel::decode(const Tensor& zhat) {
  const size_t d = cfg_.token_dim;
  const size_t p = cfg_.rows * cfg_.cols;
  if (zhat.shape() != Shape{d, p}) {
    throw std::invalid_argument("decode: expected (D,P) = (" +
                                std::to_string(d) + "," + std::to_string(p) +
                                "), got " + shape_str(zhat.shape()));
  }
  Tensor fmap = reshape(zhat, {d, cfg_.rows, cfg_.cols});
  Tensor x = relu(conv_transpose2d(fmap, up1_w_.tensor, up1_b_.tensor, 2, 1));
  x = relu(conv_transpose2d(x, up2_w_.tensor, up2_b_.tensor, 2, 1));
  x = relu(conv_transpose2d(x, up3_w_.tensor, up3_b_.tensor, 2, 1));
  // 1x1 projection to RGB as a matmul over the flattened plane.
  const size_t h = cfg_.rows * cfg_.patch, w = cfg_.cols * cfg_.patch;
  Tensor flat = reshape(x, {16, h * w});
  Tensor rgb = add_col_bias(matmul(out_w_.tensor, flat), out_b_.tensor);
  return sigmoid(reshape(rgb, {3, h, w}));
}

void DecoderModel::save(const std::string& path) const {
  auto* self = const_cast<DecoderModel*>(this);
  save_checkpoint(self->parameters(), path);
}

void DecoderModel::load(const std::string& path) {
  load_checkpoint_into(path, parameters());
}

Tensor masked_mse(const Tensor& x, const Tensor& xhat,
                  const SelectionMask& mask, size_t p) {
  return semcom::masked_mse(x, xhat, expand_mask(mask, p));
}

ReconstructionReport make_report(const Tensor& original,
                                 const Tensor& reconstruction,
                                 const SelectionMask& mask, size_t p) {
  if (original.shape() != reconstruction.shape() || original.rank() != 3) {
    throw std::invalid_argument("make_report: shape mismatch");
  }
  const size_t h = original.extent(1), w = original.extent(2);
  if (h != mask.rows * p || w != mask.cols * p) {
    throw std::invalid_argument("make_report: mask does not tile the image");
  }
  ReconstructionReport report;
  report.reconstruction = reconstruction.detach();
  std::vector<float> per_patch(mask.count(), 0.0f);
  const double denom =
      static_cast<double>(mask.n_selected) * static_cast<double>(p * p) * 3.0;
  auto a = original.data();
  auto b = reconstruction.data();
  double total = 0.0;
  for (size_t i = 0; i < mask.count(); ++i) {
    const size_t gy = i / mask.cols, gx = i % mask.cols;
    double sse = 0.0;
    for (size_t c = 0; c < 3; ++c) {
      for (size_t y = 0; y < p; ++y) {
        const size_t off = c * h * w + (gy * p + y) * w + gx * p;
        for (size_t xpos = 0; xpos < p; ++xpos) {
          const double d = static_cast<double>(a[off + xpos]) - b[off + xpos];
          sse += d * d;
        }
      }
    }
    const double share = mask.n_selected > 0 ? sse / denom : 0.0;
    per_patch[i] = static_cast<float>(share);
    if (mask.flat[i]) total += share;
  }
  report.per_patch_sqerr =
      Tensor::from_data({mask.rows, mask.cols}, std::move(per_patch));
  report.masked_mse = total;
  return report;
}

std::vector<EpochStats> train_decoder(DecoderModel& decoder,
                                      EncoderModel& encoder,
                                      const Dataset& data,
                                      const DecoderTrainOptions& opt) {
  if (!encoder.trained()) {
    throw std::invalid_argument("train_decoder: encoder has not been trained");
  }
  if (data.images.empty()) {
    throw std::invalid_argument("train_decoder: empty dataset");
  }
  const VitConfig& vcfg = encoder.config();
  const DecoderConfig& dcfg = decoder.config();
  if (dcfg.token_dim != vcfg.embed_dim || dcfg.rows != vcfg.grid_rows() ||
      dcfg.cols != vcfg.grid_cols() || dcfg.patch != vcfg.patch) {
    throw std::invalid_argument("train_decoder: decoder/encoder geometry mismatch");
  }
  ChannelModel channel = ChannelModel::fixed(opt.rate);
  channel.validate();

  AdamConfig acfg;
  acfg.lr = opt.lr;
  AdamOptimizer adam(decoder.parameters(), acfg);

  const size_t p = vcfg.patch;
  const size_t rows = vcfg.grid_rows(), cols = vcfg.grid_cols();
  std::vector<size_t> order(data.images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<EpochStats> log;
  for (size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(opt.seed, epoch, 0x647368));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += opt.batch_size) {
      const size_t end = std::min(order.size(), start + opt.batch_size);
      const float inv = 1.0f / static_cast<float>(end - start);
      adam.zero_grad();
      for (size_t k = start; k < end; ++k) {
        const LabeledImage& img = data.images[order[k]];
        Tensor zhat;
        SelectionMask mask;
        {
          NoGradGuard no_grad;
          EncoderOutput enc = encoder.encode(img.pixels);
          if (opt.bypass_compressor) {
            zhat = slice_cols(enc.z, 1, vcfg.patches()).detach();
            mask = all_ones_mask(rows, cols);
          } else {
            ClsAttentionGrid grid =
                extract_cls_attention(enc.attention, rows, cols);
            const uint64_t mask_seed =
                derive_seed(opt.seed, epoch, img.id, 0x6d736b);
            Packet pkt = transmit(channel, 0, enc.z, grid, opt.alpha,
                                  mask_seed, img.id);
            auto [z, m] = unpack(pkt, rows, cols);
            zhat = std::move(z);
            mask = std::move(m);
          }
        }
        Tensor recon = decoder.decode(zhat);
        Tensor loss = masked_mse(img.pixels, recon, mask, p);
        loss_sum += loss.value_f64();
        scale(loss, inv).backward();
      }
      adam.step();
    }
    log.push_back({epoch, loss_sum / static_cast<double>(data.images.size()),
                   0.0});
  }
  return log;
}

}  // namespace semcom
