#include "semcom/vit.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "semcom/checkpoint.hpp"
#include "semcom/ops.hpp"
#include "semcom/rng.hpp"

namespace semcom {

void VitConfig::validate() const {
  if (embed_dim == 0 || heads == 0 || layers == 0 || mlp_hidden == 0 ||
      num_classes < 2) {
    throw std::invalid_argument("vit config: all dimensions must be positive");
  }
  if (embed_dim % heads != 0) {
    throw std::invalid_argument("vit config: embed_dim not divisible by heads");
  }
  if (patch == 0 || image_h % patch != 0 || image_w % patch != 0) {
    throw std::invalid_argument("vit config: image not divisible by patch");
  }
}

std::pair<Tensor, Tensor> attention_head(const Tensor& x_h, const Tensor& wq,
                                         const Tensor& wk, const Tensor& wv,
                                         size_t scale_dim) {
  if (x_h.rank() != 2 || wq.rank() != 2 ||
      wq.extent(1) != x_h.extent(0) || wk.shape() != wq.shape() ||
      wv.shape() != wq.shape()) {
    throw std::invalid_argument("attention_head: shape mismatch");
  }
  Tensor q = matmul(wq, x_h);
  Tensor k = matmul(wk, x_h);
  Tensor v = matmul(wv, x_h);
  const float inv_scale =
      static_cast<float>(1.0 / std::sqrt(static_cast<double>(scale_dim)));
  Tensor scores = scale(matmul(transpose(q), k), inv_scale);
  Tensor attn = softmax(scores, 1);  // rows (queries) normalized over keys
  Tensor out = matmul(v, transpose(attn));
  return {out, attn};
}

namespace {

std::string pname(size_t layer, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "layer%zu.%s", layer, suffix);
  return buf;
}

std::string hname(size_t layer, size_t head, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "layer%zu.head%zu.%s", layer, head, suffix);
  return buf;
}

}  // namespace

LayerParams::LayerParams(size_t layer_index, const VitConfig& cfg, Rng& rng)
    : attn_out_w(pname(layer_index, "attn_out.w"),
                 Tensor::randn({cfg.embed_dim, cfg.embed_dim}, rng, cfg.init_std)),
      attn_out_b(pname(layer_index, "attn_out.b"), Tensor::zeros({cfg.embed_dim})),
      ln1_g(pname(layer_index, "ln1.g"), Tensor::full({cfg.embed_dim}, 1.0f)),
      ln1_b(pname(layer_index, "ln1.b"), Tensor::zeros({cfg.embed_dim})),
      ln2_g(pname(layer_index, "ln2.g"), Tensor::full({cfg.embed_dim}, 1.0f)),
      ln2_b(pname(layer_index, "ln2.b"), Tensor::zeros({cfg.embed_dim})),
      mlp_w1(pname(layer_index, "mlp.w1"),
             Tensor::randn({cfg.mlp_hidden, cfg.embed_dim}, rng, cfg.init_std)),
      mlp_b1(pname(layer_index, "mlp.b1"), Tensor::zeros({cfg.mlp_hidden})),
      mlp_w2(pname(layer_index, "mlp.w2"),
             Tensor::randn({cfg.embed_dim, cfg.mlp_hidden}, rng, cfg.init_std)),
      mlp_b2(pname(layer_index, "mlp.b2"), Tensor::zeros({cfg.embed_dim})) {
  const size_t head_dim = cfg.embed_dim / cfg.heads;
  heads.reserve(cfg.heads);
  for (size_t h = 0; h < cfg.heads; ++h) {
    heads.push_back(
        {Parameter(hname(layer_index, h, "wq"),
                   Tensor::randn({head_dim, head_dim}, rng, cfg.init_std)),
         Parameter(hname(layer_index, h, "wk"),
                   Tensor::randn({head_dim, head_dim}, rng, cfg.init_std)),
         Parameter(hname(layer_index, h, "wv"),
                   Tensor::randn({head_dim, head_dim}, rng, cfg.init_std))});
  }
}

std::vector<Parameter*> LayerParams::parameters() {
  std::vector<Parameter*> out;
  for (Head& h : heads) {
    out.push_back(&h.wq);
    out.push_back(&h.wk);
    out.push_back(&h.wv);
  }
  for (Parameter* p : {&attn_out_w, &attn_out_b, &ln1_g, &ln1_b, &ln2_g, &ln2_b,
                       &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2}) {
    out.push_back(p);
  }
  return out;
}

Tensor transformer_layer(const Tensor& x, LayerParams& params,
                         const VitConfig& cfg,
                         std::vector<Tensor>* attn_capture) {
  if (x.rank() != 2 || x.extent(0) != cfg.embed_dim) {
    throw std::invalid_argument("transformer_layer: bad input shape " +
                                shape_str(x.shape()));
  }
  const size_t head_dim = cfg.embed_dim / cfg.heads;
  const size_t scale_dim = cfg.scale_full_dim ? cfg.embed_dim : head_dim;

  Tensor ln1 = layer_norm(x, params.ln1_g.tensor, params.ln1_b.tensor);
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(cfg.heads);
  for (size_t h = 0; h < cfg.heads; ++h) {
    Tensor chunk = slice_rows(ln1, h * head_dim, head_dim);
    auto [out, attn] =
        attention_head(chunk, params.heads[h].wq.tensor,
                       params.heads[h].wk.tensor, params.heads[h].wv.tensor,
                       scale_dim);
    if (attn_capture) attn_capture->push_back(attn.detach());
    head_outputs.push_back(std::move(out));
  }
  Tensor mha = add_col_bias(
      matmul(params.attn_out_w.tensor, concat_rows(head_outputs)),
      params.attn_out_b.tensor);
  Tensor x1 = add(x, mha);

  Tensor ln2 = layer_norm(x1, params.ln2_g.tensor, params.ln2_b.tensor);
  Tensor hidden =
      gelu(add_col_bias(matmul(params.mlp_w1.tensor, ln2), params.mlp_b1.tensor));
  Tensor mlp = add_col_bias(matmul(params.mlp_w2.tensor, hidden),
                            params.mlp_b2.tensor);
  return add(x1, mlp);
}

EncoderModel::EncoderModel(VitConfig cfg, uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      meta_trained_("meta.trained", Tensor::scalar(0.0f)) {
  Rng rng(derive_seed(seed, 0x766974));
  proj_ = ProjectorParams(cfg_.embed_dim, cfg_.patch, cfg_.patches(), rng,
                          cfg_.init_std);
  layers_.clear();
  layers_.reserve(cfg_.layers);
  for (size_t k = 0; k < cfg_.layers; ++k) {
    layers_.emplace_back(k, cfg_, rng);
  }
  pred_w_ = Parameter("pred.w", Tensor::randn({cfg_.num_classes, cfg_.embed_dim},
                                              rng, cfg_.init_std));
  pred_b_ = Parameter("pred.b", Tensor::zeros({cfg_.num_classes}));
}

std::vector<Parameter*> EncoderModel::parameters() {
  std::vector<Parameter*> out = proj_.parameters();
  for (LayerParams& lp : layers_) {
    auto ps = lp.parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  out.push_back(&pred_w_);
  out.push_back(&pred_b_);
  return out;
}

EncoderOutput EncoderModel::encode(const Tensor& image) {
  if (image.rank() != 3 || image.extent(1) != cfg_.image_h ||
      image.extent(2) != cfg_.image_w) {
    throw std::invalid_argument("encode: image shape " +
                                shape_str(image.shape()) +
                                " does not match config");
  }
  PatchGrid grid = patchify(image, cfg_.patch);
  Tensor x = project(grid, proj_);
  std::vector<Tensor> attn;
  for (size_t k = 0; k < cfg_.layers; ++k) {
    const bool last = (k + 1 == cfg_.layers);
    x = transformer_layer(x, layers_[k], cfg_, last ? &attn : nullptr);
  }
  const size_t n = cfg_.patches() + 1;
  std::vector<float> stacked(cfg_.heads * n * n);
  for (size_t h = 0; h < cfg_.heads; ++h) {
    auto src = attn[h].data();
    std::copy(src.begin(), src.end(), stacked.begin() + h * n * n);
  }

  Tensor z_cls = slice_cols(x, 0, 1);  // (D,1)
  Tensor logits = reshape(
      add_col_bias(matmul(pred_w_.tensor, z_cls), pred_b_.tensor),
      {cfg_.num_classes});

  EncoderOutput out;
  out.z = x;
  out.attention = Tensor::from_data({cfg_.heads, n, n}, std::move(stacked));
  out.logits = logits;
  return out;
}

void EncoderModel::save(const std::string& path) const {
  auto* self = const_cast<EncoderModel*>(this);
  self->meta_trained_.tensor.mutable_data()[0] = trained_ ? 1.0f : 0.0f;
  auto params = self->parameters();
  params.push_back(&self->meta_trained_);
  save_checkpoint(params, path);
}

void EncoderModel::load(const std::string& path) {
  auto params = parameters();
  params.push_back(&meta_trained_);
  load_checkpoint_into(path, params);
  trained_ = meta_trained_.tensor[0] != 0.0f;
}

std::vector<EpochStats> train_encoder(EncoderModel& model, const Dataset& data,
                                      const TrainOptions& opt) {
  if (data.images.empty()) {
    throw std::invalid_argument("train_encoder: empty dataset");
  }
  for (const LabeledImage& img : data.images) {
    if (img.label >= model.config().num_classes) {
      throw std::invalid_argument("train_encoder: label out of range");
    }
  }
  AdamConfig acfg;
  acfg.lr = opt.lr;
  AdamOptimizer adam(model.parameters(), acfg);

  std::vector<EpochStats> log;
  std::vector<size_t> order(data.images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(opt.seed, epoch, 0x736866));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += opt.batch_size) {
      const size_t end = std::min(order.size(), start + opt.batch_size);
      const float inv = 1.0f / static_cast<float>(end - start);
      adam.zero_grad();
      for (size_t k = start; k < end; ++k) {
        const LabeledImage& img = data.images[order[k]];
        EncoderOutput out = model.encode(img.pixels);
        Tensor loss = cross_entropy(out.logits, img.label);
        loss_sum += loss.value_f64();
        scale(loss, inv).backward();
      }
      adam.step();
    }

    size_t correct = 0;
    {
      NoGradGuard no_grad;
      for (const LabeledImage& img : data.images) {
        EncoderOutput out = model.encode(img.pixels);
        size_t best = 0;
        for (size_t c = 1; c < model.config().num_classes; ++c) {
          if (out.logits[c] > out.logits[best]) best = c;
        }
        if (best == img.label) ++correct;
      }
    }
    log.push_back({epoch, loss_sum / static_cast<double>(data.images.size()),
                   static_cast<double>(correct) /
                       static_cast<double>(data.images.size())});
  }
  model.mark_trained();
  return log;
}

}  // namespace semcom
