#include "semcom/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "semcom/checkpoint.hpp"
#include "semcom/errors.hpp"
#include "semcom/ops.hpp"
#include "semcom/rng.hpp"

namespace semcom {

namespace {

std::string fmt_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string fmt_value(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_g(v[i]);
  }
  return out;
}

std::string join_u64(const std::vector<uint64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": " + s);
  }
}

uint64_t parse_u64(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + s);
  }
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "no") return false;
  throw std::invalid_argument("config: bad flag for " + key + ": " + s);
}

constexpr const char* kVersion = "0.1.0";

}  // namespace

FrozenPipeline::Result FrozenPipeline::run(const Tensor& pixels,
                                           uint32_t image_id,
                                           uint64_t mask_seed) const {
  if (!encoder || !decoder) {
    throw std::invalid_argument("pipeline: encoder/decoder not set");
  }
  NoGradGuard no_grad;
  const VitConfig& cfg = encoder->config();
  EncoderOutput enc = encoder->encode(pixels);
  ClsAttentionGrid grid =
      extract_cls_attention(enc.attention, cfg.grid_rows(), cfg.grid_cols());
  Packet pkt = transmit(ChannelModel::fixed(rate), 0, enc.z, grid, alpha,
                        mask_seed, image_id);
  auto [zhat, mask] = unpack(pkt, cfg.grid_rows(), cfg.grid_cols());
  Result result;
  result.reconstruction = decoder->decode(zhat).detach();
  result.mask = std::move(mask);
  result.packet = std::move(pkt);
  return result;
}

Tensor FrozenPipeline::reconstruct(const LabeledImage& image,
                                   uint64_t mask_seed) const {
  return run(image.pixels, image.id, mask_seed).reconstruction;
}

void ExperimentConfig::validate() const {
  vit.validate();
  if (dataset_path.empty()) {
    if (num_classes < 2 || per_class == 0) {
      throw std::invalid_argument("config: synthetic dataset needs >=2 classes");
    }
    if (num_classes != vit.num_classes) {
      throw std::invalid_argument(
          "config: num_classes disagrees with the model head");
    }
  }
  if (rates.empty()) throw std::invalid_argument("config: no rates");
  for (double r : rates) {
    if (!(r > 0.0) || r > 1.0) {
      throw std::invalid_argument("config: rate outside (0,1]: " + fmt_g(r));
    }
  }
  if (alphas.empty()) throw std::invalid_argument("config: no alphas");
  for (double a : alphas) {
    if (a < 0.0 || a > 1.0) {
      throw std::invalid_argument("config: alpha outside [0,1]: " + fmt_g(a));
    }
  }
  if (beta < 0.0 || beta > 1.0) {
    throw std::invalid_argument("config: beta outside [0,1]");
  }
  if (seeds.empty()) throw std::invalid_argument("config: at least one seed");
  if (encoder_epochs == 0 || decoder_epochs == 0) {
    throw std::invalid_argument("config: zero epochs");
  }
  if (batch_size == 0) throw std::invalid_argument("config: zero batch size");
  if (!(encoder_lr > 0.0f) || !(decoder_lr > 0.0f) || !(classifier_lr > 0.0f)) {
    throw std::invalid_argument("config: learning rates must be positive");
  }
  if (out_dir.empty()) throw std::invalid_argument("config: empty out_dir");
}

std::string ExperimentConfig::canonical_text() const {
  std::ostringstream os;
  os << "alphas = " << join_doubles(alphas) << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "beta = " << fmt_g(beta) << "\n";
  os << "classifier_epochs = " << classifier_epochs << "\n";
  os << "classifier_lr = " << fmt_g(classifier_lr) << "\n";
  os << "data_seed = " << data_seed << "\n";
  os << "dataset_path = " << dataset_path << "\n";
  os << "decoder_epochs = " << decoder_epochs << "\n";
  os << "decoder_lr = " << fmt_g(decoder_lr) << "\n";
  os << "embed_dim = " << vit.embed_dim << "\n";
  os << "encoder_epochs = " << encoder_epochs << "\n";
  os << "encoder_lr = " << fmt_g(encoder_lr) << "\n";
  os << "finetune_epochs = " << finetune_epochs << "\n";
  os << "heads = " << vit.heads << "\n";
  os << "image_h = " << vit.image_h << "\n";
  os << "image_w = " << vit.image_w << "\n";
  os << "layers = " << vit.layers << "\n";
  os << "mlp_hidden = " << vit.mlp_hidden << "\n";
  os << "num_classes = " << num_classes << "\n";
  os << "patch = " << vit.patch << "\n";
  os << "per_class = " << per_class << "\n";
  os << "rates = " << join_doubles(rates) << "\n";
  os << "run_classifier_stage = " << (run_classifier_stage ? 1 : 0) << "\n";
  os << "scale_full_dim = " << (vit.scale_full_dim ? 1 : 0) << "\n";
  os << "seeds = " << join_u64(seeds) << "\n";
  return os.str();
}

uint64_t ExperimentConfig::hash() const {
  // FNV-1a 64 over the canonical text.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string ExperimentConfig::effective_id() const {
  if (!experiment_id.empty()) return experiment_id;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "exp%08llx",
                static_cast<unsigned long long>(hash() & 0xffffffffULL));
  return buf;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config: empty key at line " +
                                  std::to_string(lineno));
    }
    if (!kv.emplace(key, value).second) {
      throw std::invalid_argument("config: duplicate key " + key);
    }
  }
  return kv;
}

ExperimentConfig ExperimentConfig::from_kv(
    const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "dataset_path") {
      cfg.dataset_path = value;
    } else if (key == "num_classes") {
      cfg.num_classes = parse_u64(key, value);
      cfg.vit.num_classes = cfg.num_classes;
    } else if (key == "per_class") {
      cfg.per_class = parse_u64(key, value);
    } else if (key == "data_seed") {
      cfg.data_seed = parse_u64(key, value);
    } else if (key == "embed_dim") {
      cfg.vit.embed_dim = parse_u64(key, value);
    } else if (key == "heads") {
      cfg.vit.heads = parse_u64(key, value);
    } else if (key == "layers") {
      cfg.vit.layers = parse_u64(key, value);
    } else if (key == "mlp_hidden") {
      cfg.vit.mlp_hidden = parse_u64(key, value);
    } else if (key == "image_h") {
      cfg.vit.image_h = parse_u64(key, value);
    } else if (key == "image_w") {
      cfg.vit.image_w = parse_u64(key, value);
    } else if (key == "patch") {
      cfg.vit.patch = parse_u64(key, value);
    } else if (key == "scale_full_dim") {
      cfg.vit.scale_full_dim = parse_bool(key, value);
    } else if (key == "rates") {
      cfg.rates.clear();
      for (const std::string& tok : split(value, ',')) {
        cfg.rates.push_back(parse_double(key, trim(tok)));
      }
    } else if (key == "alphas") {
      cfg.alphas.clear();
      for (const std::string& tok : split(value, ',')) {
        cfg.alphas.push_back(parse_double(key, trim(tok)));
      }
    } else if (key == "beta") {
      cfg.beta = parse_double(key, value);
    } else if (key == "encoder_epochs") {
      cfg.encoder_epochs = parse_u64(key, value);
    } else if (key == "decoder_epochs") {
      cfg.decoder_epochs = parse_u64(key, value);
    } else if (key == "classifier_epochs") {
      cfg.classifier_epochs = parse_u64(key, value);
    } else if (key == "finetune_epochs") {
      cfg.finetune_epochs = parse_u64(key, value);
    } else if (key == "batch_size") {
      cfg.batch_size = parse_u64(key, value);
    } else if (key == "encoder_lr") {
      cfg.encoder_lr = static_cast<float>(parse_double(key, value));
    } else if (key == "decoder_lr") {
      cfg.decoder_lr = static_cast<float>(parse_double(key, value));
    } else if (key == "classifier_lr") {
      cfg.classifier_lr = static_cast<float>(parse_double(key, value));
    } else if (key == "seeds") {
      cfg.seeds.clear();
      for (const std::string& tok : split(value, ',')) {
        cfg.seeds.push_back(parse_u64(key, trim(tok)));
      }
    } else if (key == "run_classifier_stage") {
      cfg.run_classifier_stage = parse_bool(key, value);
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else if (key == "experiment_id") {
      cfg.experiment_id = value;
    } else {
      throw std::invalid_argument("config: unknown key " + key);
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_kv(parse_kv_file(path));
}

MetricsWriter::MetricsWriter(const std::string& path) : path_(path) {
  buffer_ = "experiment,stage,rate,alpha,epoch,metric,value\n";
}

MetricsWriter::~MetricsWriter() {
  try {
    flush();
  } catch (...) {
    // destructor must not throw
  }
}

void MetricsWriter::append(const MetricsRow& row) {
  buffer_ += row.experiment;
  buffer_ += ',';
  buffer_ += row.stage;
  buffer_ += ',';
  if (row.has_rate) buffer_ += fmt_g(row.rate);
  buffer_ += ',';
  if (row.has_alpha) buffer_ += fmt_g(row.alpha);
  buffer_ += ',';
  buffer_ += std::to_string(row.epoch);
  buffer_ += ',';
  buffer_ += row.metric;
  buffer_ += ',';
  buffer_ += fmt_value(row.value);
  buffer_ += '\n';
}

void MetricsWriter::flush() {
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics: " + path_);
  out << buffer_;
  if (!out) throw std::runtime_error("metrics write failed: " + path_);
}

std::vector<MetricsRow> load_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics: " + path);
  std::vector<MetricsRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;  // header
    }
    if (trim(line).empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != 7) {
      throw ParseError(ParseError::Kind::BadValue,
                       "metrics: malformed row: " + line);
    }
    MetricsRow row;
    row.experiment = fields[0];
    row.stage = fields[1];
    if (!fields[2].empty()) {
      row.has_rate = true;
      row.rate = parse_double("rate", fields[2]);
    }
    if (!fields[3].empty()) {
      row.has_alpha = true;
      row.alpha = parse_double("alpha", fields[3]);
    }
    row.epoch = parse_u64("epoch", fields[4]);
    row.metric = fields[5];
    row.value = parse_double("value", fields[6]);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<RateSummaryRow> compare_rates(const std::vector<MetricsRow>& rows) {
  // (experiment, alpha) -> rate -> (max epoch, value at it)
  std::map<std::pair<std::string, double>, std::map<double, std::pair<size_t, double>>>
      groups;
  for (const MetricsRow& row : rows) {
    if (row.stage != "decoder" || row.metric != "masked_mse") continue;
    if (!row.has_rate || !row.has_alpha) continue;
    auto& per_rate = groups[{row.experiment, row.alpha}];
    auto it = per_rate.find(row.rate);
    if (it == per_rate.end() || row.epoch >= it->second.first) {
      per_rate[row.rate] = {row.epoch, row.value};
    }
  }
  if (groups.empty()) {
    throw std::invalid_argument("compare_rates: no decoder metrics found");
  }
  std::vector<RateSummaryRow> out;
  for (const auto& [key, per_rate] : groups) {
    if (per_rate.size() < 2) {
      throw std::invalid_argument(
          "compare_rates: need at least two rates per group");
    }
    const auto baseline = per_rate.find(1.0);
    if (baseline == per_rate.end()) {
      throw std::invalid_argument(
          "compare_rates: missing rate-1 baseline for experiment " + key.first);
    }
    for (const auto& [rate, ev] : per_rate) {
      RateSummaryRow row;
      row.experiment = key.first;
      row.alpha = key.second;
      row.rate = rate;
      row.final_masked_mse = ev.second;
      row.ratio_to_rate1 = ev.second / baseline->second.second;
      out.push_back(std::move(row));
    }
  }
  return out;
}

void write_rate_summary(const std::vector<RateSummaryRow>& rows,
                        const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write summary: " + path);
  out << "experiment,alpha,rate,final_masked_mse,ratio_to_rate1\n";
  for (const RateSummaryRow& row : rows) {
    out << row.experiment << ',' << fmt_g(row.alpha) << ',' << fmt_g(row.rate)
        << ',' << fmt_value(row.final_masked_mse) << ','
        << fmt_value(row.ratio_to_rate1) << '\n';
  }
}

void dump_examples(const FrozenPipeline& pipeline,
                   const std::vector<LabeledImage>& images,
                   uint16_t num_classes, const std::string& out_dir,
                   uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  for (const LabeledImage& img : images) {
    auto result =
        pipeline.run(img.pixels, img.id, derive_seed(seed, img.id, 0x6478));

    Dataset orig;
    orig.num_classes = num_classes;
    orig.images.push_back(img);
    Dataset recon;
    recon.num_classes = num_classes;
    LabeledImage rimg;
    rimg.pixels = result.reconstruction;
    rimg.label = img.label;
    rimg.id = img.id;
    recon.images.push_back(std::move(rimg));

    const std::string stem =
        out_dir + "/example_" + std::to_string(img.id);
    save_dataset(orig, stem + "_orig.semd");
    save_dataset(recon, stem + "_recon.semd");

    const auto bitmap = result.mask.to_bitmap();
    std::ofstream mask_out(stem + "_mask.bin", std::ios::binary | std::ios::trunc);
    if (!mask_out) throw std::runtime_error("cannot write mask sidecar");
    mask_out.write(reinterpret_cast<const char*>(bitmap.data()),
                   static_cast<std::streamsize>(bitmap.size()));
  }
}

Dataset prepare_dataset(const ExperimentConfig& cfg) {
  if (!cfg.dataset_path.empty()) {
    Dataset ds = load_dataset(cfg.dataset_path, cfg.vit.patch);
    if (ds.height() != cfg.vit.image_h || ds.width() != cfg.vit.image_w) {
      throw std::invalid_argument("dataset does not match configured image size");
    }
    if (ds.num_classes != cfg.vit.num_classes) {
      throw std::invalid_argument("dataset class count does not match config");
    }
    return ds;
  }
  return generate_synthetic(cfg.num_classes, cfg.per_class, cfg.vit.image_h,
                            cfg.vit.image_w, cfg.data_seed);
}

namespace {

void write_manifest(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  char hash_buf[32];
  std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                static_cast<unsigned long long>(cfg.hash()));
  out << "experiment = " << cfg.effective_id() << "\n";
  out << "config_hash = " << hash_buf << "\n";
  out << "version = " << kVersion << "\n";
  out << "# canonical configuration\n";
  out << cfg.canonical_text();
}

std::string seed_tag(uint64_t seed) { return "s" + std::to_string(seed); }

std::string cell_tag(uint64_t seed, double rate, double alpha) {
  return seed_tag(seed) + "_r" + fmt_g(rate) + "_a" + fmt_g(alpha);
}

}  // namespace

void run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  Dataset data = prepare_dataset(cfg);

  std::filesystem::create_directories(cfg.out_dir);
  write_manifest(cfg, cfg.out_dir + "/manifest.txt");
  MetricsWriter metrics(cfg.out_dir + "/metrics.csv");

  for (uint64_t seed : cfg.seeds) {
    const std::string exp = cfg.effective_id() + "-" + seed_tag(seed);

    // Stage 1: encoder on cross-entropy.
    EncoderModel encoder(cfg.vit, seed);
    TrainOptions eopt;
    eopt.epochs = cfg.encoder_epochs;
    eopt.batch_size = cfg.batch_size;
    eopt.lr = cfg.encoder_lr;
    eopt.seed = seed;
    auto enc_log = train_encoder(encoder, data, eopt);
    for (const EpochStats& row : enc_log) {
      metrics.append({exp, "encoder", false, 0, false, 0, row.epoch,
                      "train_loss", row.loss});
      metrics.append({exp, "encoder", false, 0, false, 0, row.epoch,
                      "train_accuracy", row.accuracy});
    }
    encoder.save(cfg.out_dir + "/encoder_" + seed_tag(seed) + ".semc");
    metrics.flush();

    // Stage 3 pretraining is rate-independent; do it once per seed.
    ClassifierConfig ccfg;
    ccfg.num_classes = cfg.vit.num_classes;
    ccfg.image_h = cfg.vit.image_h;
    ccfg.image_w = cfg.vit.image_w;
    std::string pretrained_path;
    if (cfg.run_classifier_stage) {
      ClassifierModel classifier(ccfg, seed);
      auto pre_log = pretrain_classifier(classifier, data, cfg.classifier_epochs,
                                         seed, cfg.batch_size,
                                         cfg.classifier_lr);
      for (const EpochStats& row : pre_log) {
        metrics.append({exp, "classifier_pretrain", false, 0, false, 0,
                        row.epoch, "train_loss", row.loss});
        metrics.append({exp, "classifier_pretrain", false, 0, false, 0,
                        row.epoch, "train_accuracy", row.accuracy});
      }
      pretrained_path =
          cfg.out_dir + "/classifier_pretrained_" + seed_tag(seed) + ".semc";
      classifier.save(pretrained_path);
      metrics.flush();
    }

    // Stage 2 (+3): per (alpha, rate) cell.
    DecoderConfig dcfg;
    dcfg.token_dim = cfg.vit.embed_dim;
    dcfg.rows = cfg.vit.grid_rows();
    dcfg.cols = cfg.vit.grid_cols();
    dcfg.patch = cfg.vit.patch;
    for (double alpha : cfg.alphas) {
      for (double rate : cfg.rates) {
        DecoderModel decoder(dcfg, derive_seed(seed, 0x64656373));
        DecoderTrainOptions dopt;
        dopt.epochs = cfg.decoder_epochs;
        dopt.batch_size = cfg.batch_size;
        dopt.lr = cfg.decoder_lr;
        dopt.seed = seed;
        dopt.rate = rate;
        dopt.alpha = alpha;
        auto dec_log = train_decoder(decoder, encoder, data, dopt);
        for (const EpochStats& row : dec_log) {
          metrics.append({exp, "decoder", true, rate, true, alpha, row.epoch,
                          "masked_mse", row.loss});
        }
        decoder.save(cfg.out_dir + "/decoder_" + cell_tag(seed, rate, alpha) +
                     ".semc");
        metrics.flush();

        if (cfg.run_classifier_stage) {
          ClassifierModel classifier(ccfg, seed);
          classifier.load(pretrained_path);
          FrozenPipeline pipeline{&encoder, &decoder, rate, alpha};
          ReconstructFn recon = [&pipeline](const LabeledImage& img,
                                            uint64_t mask_seed) {
            return pipeline.reconstruct(img, mask_seed);
          };

          // Frozen-classifier baseline on this cell's reconstructions.
          std::vector<LabeledImage> compressed;
          compressed.reserve(data.images.size());
          for (const LabeledImage& img : data.images) {
            LabeledImage c;
            c.pixels = recon(img, derive_seed(seed, 0x6576616c, img.id));
            c.label = img.label;
            c.id = img.id;
            compressed.push_back(std::move(c));
          }
          metrics.append({exp, "classifier_eval", true, rate, true, alpha, 0,
                          "accuracy_original_pretrained",
                          evaluate(classifier, data.images)});
          metrics.append({exp, "classifier_eval", true, rate, true, alpha, 0,
                          "accuracy_compressed_pretrained",
                          evaluate(classifier, compressed)});

          FineTuneConfig fcfg;
          fcfg.beta = cfg.beta;
          fcfg.epochs = cfg.finetune_epochs;
          fcfg.seed = seed;
          fcfg.rate = rate;
          fcfg.batch_size = cfg.batch_size;
          fcfg.lr = cfg.classifier_lr;
          auto ft_log = finetune(classifier, data, recon, fcfg);
          for (const FineTuneStats& row : ft_log) {
            metrics.append({exp, "classifier_finetune", true, rate, true, alpha,
                            row.epoch, "finetune_loss", row.loss});
            metrics.append({exp, "classifier_finetune", true, rate, true, alpha,
                            row.epoch, "accuracy_original",
                            row.accuracy_original});
            metrics.append({exp, "classifier_finetune", true, rate, true, alpha,
                            row.epoch, "accuracy_compressed",
                            row.accuracy_compressed});
          }
          classifier.save(cfg.out_dir + "/classifier_" +
                          cell_tag(seed, rate, alpha) + ".semc");
          metrics.flush();
        }
      }
    }
  }
  metrics.flush();

  // Cross-rate summary when the uncompressed baseline was part of the grid.
  if (std::find(cfg.rates.begin(), cfg.rates.end(), 1.0) != cfg.rates.end() &&
      cfg.rates.size() >= 2) {
    auto rows = load_metrics_csv(cfg.out_dir + "/metrics.csv");
    write_rate_summary(compare_rates(rows), cfg.out_dir + "/rate_summary.csv");
  }
}

}  // namespace semcom
