#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semcom/classifier.hpp"
#include "semcom/dataset.hpp"
#include "semcom/decoder.hpp"
#include "semcom/masker.hpp"
#include "semcom/packet.hpp"
#include "semcom/vit.hpp"

namespace semcom {

// Trained encoder + decoder bound to one (rate, alpha) operating point.
// Runs the receiver path without touching any parameter.
struct FrozenPipeline {
  EncoderModel* encoder = nullptr;
  DecoderModel* decoder = nullptr;
  double rate = 1.0;
  double alpha = 1.0;

  struct Result {
    Tensor reconstruction;
    SelectionMask mask;
    Packet packet;
  };

  Result run(const Tensor& pixels, uint32_t image_id, uint64_t mask_seed) const;
  Tensor reconstruct(const LabeledImage& image, uint64_t mask_seed) const;
};

struct ExperimentConfig {
  // Dataset: loaded from dataset_path when set, generated otherwise.
  std::string dataset_path;
  size_t num_classes = 4;
  size_t per_class = 32;
  uint64_t data_seed = 1;

  VitConfig vit;

  std::vector<double> rates{0.25, 0.5, 0.75, 1.0};
  std::vector<double> alphas{1.0, 0.85};
  double beta = 0.3;

  size_t encoder_epochs = 30;
  size_t decoder_epochs = 30;
  size_t classifier_epochs = 30;
  size_t finetune_epochs = 10;
  size_t batch_size = 8;
  float encoder_lr = 2e-3f;
  float decoder_lr = 5e-4f;
  float classifier_lr = 5e-4f;

  std::vector<uint64_t> seeds{1};
  bool run_classifier_stage = true;
  std::string out_dir = "out";
  std::string experiment_id;  // derived from the config hash when empty

  void validate() const;
  std::string canonical_text() const;
  uint64_t hash() const;
  std::string effective_id() const;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_kv(
      const std::map<std::string, std::string>& kv);
};

// Flat "key = value" file with '#' comments.
std::map<std::string, std::string> parse_kv_file(const std::string& path);

struct MetricsRow {
  std::string experiment;
  std::string stage;
  bool has_rate = false;
  double rate = 0.0;
  bool has_alpha = false;
  double alpha = 0.0;
  size_t epoch = 0;
  std::string metric;
  double value = 0.0;
};

// Append-only CSV with the fixed header
// experiment,stage,rate,alpha,epoch,metric,value and deterministic number
// formatting.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  ~MetricsWriter();
  void append(const MetricsRow& row);
  void flush();

 private:
  std::string path_;
  std::string buffer_;
};

std::vector<MetricsRow> load_metrics_csv(const std::string& path);

struct RateSummaryRow {
  std::string experiment;
  double alpha = 0.0;
  double rate = 0.0;
  double final_masked_mse = 0.0;
  double ratio_to_rate1 = 0.0;
};

// Final-epoch decoder loss per (experiment, alpha, rate) with its ratio to
// the rate-1 baseline of the same group. Throws when fewer than two rates
// are present or the baseline is missing.
std::vector<RateSummaryRow> compare_rates(const std::vector<MetricsRow>& rows);

void write_rate_summary(const std::vector<RateSummaryRow>& rows,
                        const std::string& path);

// Originals, reconstructions (single-image "SEMD" files), and mask bitmap
// sidecars for each image.
void dump_examples(const FrozenPipeline& pipeline,
                   const std::vector<LabeledImage>& images,
                   uint16_t num_classes, const std::string& out_dir,
                   uint64_t seed);

// Two-stage schedule, then the optional classifier stage, over the full
// (rate, alpha) grid for every seed; metrics, checkpoints, and a run
// manifest land under cfg.out_dir.
void run_pipeline(const ExperimentConfig& cfg);

// Loads a dataset per the config (file or synthetic).
Dataset prepare_dataset(const ExperimentConfig& cfg);

}  // namespace semcom
