// Command-line front end for the semantic-communication pipeline:
// dataset generation, the two training stages, classifier fine-tuning,
// evaluation, and the full experiment grid.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "semcom/classifier.hpp"
#include "semcom/dataset.hpp"
#include "semcom/decoder.hpp"
#include "semcom/errors.hpp"
#include "semcom/masker.hpp"
#include "semcom/packet.hpp"
#include "semcom/pipeline.hpp"
#include "semcom/rng.hpp"
#include "semcom/vit.hpp"

namespace {

using namespace semcom;

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 1;
  bool seed_set = false;
};

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    cfg = ExperimentConfig::from_file(args.config_path);
  }
  if (args.seed_set) cfg.seeds = {args.seed};
  cfg.validate();
  return cfg;
}

DecoderConfig decoder_config(const ExperimentConfig& cfg) {
  DecoderConfig dcfg;
  dcfg.token_dim = cfg.vit.embed_dim;
  dcfg.rows = cfg.vit.grid_rows();
  dcfg.cols = cfg.vit.grid_cols();
  dcfg.patch = cfg.vit.patch;
  return dcfg;
}

void print_epoch_log(const char* stage, const std::vector<EpochStats>& log) {
  for (const EpochStats& row : log) {
    std::printf("%s epoch %zu loss %.6g accuracy %.4f\n", stage, row.epoch,
                row.loss, row.accuracy);
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Attention-driven semantic communication pipeline"};
  app.require_subcommand(1);

  CommonArgs common;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string gen_out = "data.semd";
  size_t gen_classes = 4, gen_per_class = 32, gen_h = 32, gen_w = 32;
  uint64_t gen_seed = 1;
  gen->add_option("--classes", gen_classes, "Number of classes");
  gen->add_option("--per-class", gen_per_class, "Images per class");
  gen->add_option("--height", gen_h, "Image height");
  gen->add_option("--width", gen_w, "Image width");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output .semd path");

  // train-encoder
  auto* tenc = app.add_subcommand("train-encoder", "Stage 1: encoder training");
  std::string tenc_out = "encoder.semc";
  tenc->add_option("--config", common.config_path, "Config file");
  tenc->add_option("--seed", common.seed, "Seed override")
      ->each([&common](const std::string&) { common.seed_set = true; });
  tenc->add_option("--out", tenc_out, "Encoder checkpoint path");

  // train-decoder
  auto* tdec = app.add_subcommand("train-decoder", "Stage 2: decoder training");
  std::string tdec_encoder = "encoder.semc", tdec_out = "decoder.semc";
  double tdec_rate = 1.0, tdec_alpha = 1.0;
  tdec->add_option("--config", common.config_path, "Config file");
  tdec->add_option("--seed", common.seed, "Seed override")
      ->each([&common](const std::string&) { common.seed_set = true; });
  tdec->add_option("--encoder", tdec_encoder, "Trained encoder checkpoint");
  tdec->add_option("--rate", tdec_rate, "Compression rate in (0,1]");
  tdec->add_option("--alpha", tdec_alpha, "Threshold fraction in [0,1]");
  tdec->add_option("--out", tdec_out, "Decoder checkpoint path");

  // train-classifier
  auto* tclf = app.add_subcommand("train-classifier",
                                  "Pretrain the receiver classifier");
  std::string tclf_out = "classifier.semc";
  tclf->add_option("--config", common.config_path, "Config file");
  tclf->add_option("--seed", common.seed, "Seed override")
      ->each([&common](const std::string&) { common.seed_set = true; });
  tclf->add_option("--out", tclf_out, "Classifier checkpoint path");

  // finetune-classifier
  auto* ftclf = app.add_subcommand("finetune-classifier",
                                   "Fine-tune the classifier on reconstructions");
  std::string ft_encoder = "encoder.semc", ft_decoder = "decoder.semc";
  std::string ft_classifier = "classifier.semc", ft_out = "classifier_ft.semc";
  double ft_rate = 0.5, ft_alpha = 1.0, ft_beta = -1.0;
  ftclf->add_option("--config", common.config_path, "Config file");
  ftclf->add_option("--seed", common.seed, "Seed override")
      ->each([&common](const std::string&) { common.seed_set = true; });
  ftclf->add_option("--encoder", ft_encoder, "Trained encoder checkpoint");
  ftclf->add_option("--decoder", ft_decoder, "Trained decoder checkpoint");
  ftclf->add_option("--classifier", ft_classifier, "Pretrained classifier");
  ftclf->add_option("--rate", ft_rate, "Compression rate in (0,1]");
  ftclf->add_option("--alpha", ft_alpha, "Threshold fraction in [0,1]");
  ftclf->add_option("--beta", ft_beta, "Original-image loss weight");
  ftclf->add_option("--out", ft_out, "Fine-tuned classifier path");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Classifier accuracy on originals "
                                              "and compressed reconstructions");
  std::string ev_encoder = "encoder.semc", ev_decoder = "decoder.semc";
  std::string ev_classifier = "classifier.semc";
  double ev_rate = 0.5, ev_alpha = 1.0;
  eval_cmd->add_option("--config", common.config_path, "Config file");
  eval_cmd->add_option("--seed", common.seed, "Seed override")
      ->each([&common](const std::string&) { common.seed_set = true; });
  eval_cmd->add_option("--encoder", ev_encoder, "Trained encoder checkpoint");
  eval_cmd->add_option("--decoder", ev_decoder, "Trained decoder checkpoint");
  eval_cmd->add_option("--classifier", ev_classifier, "Classifier checkpoint");
  eval_cmd->add_option("--rate", ev_rate, "Compression rate in (0,1]");
  eval_cmd->add_option("--alpha", ev_alpha, "Threshold fraction in [0,1]");

  // run-all
  auto* runall = app.add_subcommand("run-all", "Full experiment grid");
  std::string runall_out;
  runall->add_option("--config", common.config_path, "Config file");
  runall->add_option("--seed", common.seed, "Seed override")
      ->each([&common](const std::string&) { common.seed_set = true; });
  runall->add_option("--out", runall_out, "Output directory override");

  // dump-examples
  auto* dump = app.add_subcommand("dump-examples",
                                  "Write original/reconstruction pairs");
  std::string dp_encoder = "encoder.semc", dp_decoder = "decoder.semc";
  std::string dp_out = "examples";
  double dp_rate = 0.5, dp_alpha = 1.0;
  size_t dp_count = 3;
  dump->add_option("--config", common.config_path, "Config file");
  dump->add_option("--seed", common.seed, "Seed override")
      ->each([&common](const std::string&) { common.seed_set = true; });
  dump->add_option("--encoder", dp_encoder, "Trained encoder checkpoint");
  dump->add_option("--decoder", dp_decoder, "Trained decoder checkpoint");
  dump->add_option("--rate", dp_rate, "Compression rate in (0,1]");
  dump->add_option("--alpha", dp_alpha, "Threshold fraction in [0,1]");
  dump->add_option("--count", dp_count, "Number of images to dump");
  dump->add_option("--out", dp_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    Dataset ds = generate_synthetic(gen_classes, gen_per_class, gen_h, gen_w,
                                    gen_seed);
    save_dataset(ds, gen_out);
    std::printf("wrote %zu images (%zu classes) to %s\n", ds.images.size(),
                static_cast<size_t>(ds.num_classes), gen_out.c_str());
    return 0;
  }

  ExperimentConfig cfg = load_config(common);
  const uint64_t seed = cfg.seeds[0];

  if (tenc->parsed()) {
    Dataset data = prepare_dataset(cfg);
    EncoderModel encoder(cfg.vit, seed);
    TrainOptions opt;
    opt.epochs = cfg.encoder_epochs;
    opt.batch_size = cfg.batch_size;
    opt.lr = cfg.encoder_lr;
    opt.seed = seed;
    auto log = train_encoder(encoder, data, opt);
    print_epoch_log("encoder", log);
    encoder.save(tenc_out);
    std::printf("saved encoder to %s\n", tenc_out.c_str());
    return 0;
  }

  if (tdec->parsed()) {
    Dataset data = prepare_dataset(cfg);
    EncoderModel encoder(cfg.vit, seed);
    encoder.load(tdec_encoder);
    DecoderModel decoder(decoder_config(cfg), derive_seed(seed, 0x64656373));
    DecoderTrainOptions opt;
    opt.epochs = cfg.decoder_epochs;
    opt.batch_size = cfg.batch_size;
    opt.lr = cfg.decoder_lr;
    opt.seed = seed;
    opt.rate = tdec_rate;
    opt.alpha = tdec_alpha;
    auto log = train_decoder(decoder, encoder, data, opt);
    for (const EpochStats& row : log) {
      std::printf("decoder epoch %zu masked_mse %.6g\n", row.epoch, row.loss);
    }
    decoder.save(tdec_out);
    std::printf("saved decoder to %s\n", tdec_out.c_str());
    return 0;
  }

  if (tclf->parsed()) {
    Dataset data = prepare_dataset(cfg);
    ClassifierConfig ccfg{cfg.vit.num_classes, cfg.vit.image_h, cfg.vit.image_w};
    ClassifierModel classifier(ccfg, seed);
    auto log = pretrain_classifier(classifier, data, cfg.classifier_epochs,
                                   seed, cfg.batch_size, cfg.classifier_lr);
    print_epoch_log("classifier", log);
    classifier.save(tclf_out);
    std::printf("saved classifier to %s\n", tclf_out.c_str());
    return 0;
  }

  if (ftclf->parsed() || eval_cmd->parsed() || dump->parsed()) {
    Dataset data = prepare_dataset(cfg);
    EncoderModel encoder(cfg.vit, seed);
    DecoderModel decoder(decoder_config(cfg), derive_seed(seed, 0x64656373));

    if (ftclf->parsed()) {
      encoder.load(ft_encoder);
      decoder.load(ft_decoder);
      ClassifierConfig ccfg{cfg.vit.num_classes, cfg.vit.image_h, cfg.vit.image_w};
      ClassifierModel classifier(ccfg, seed);
      classifier.load(ft_classifier);
      FrozenPipeline pipeline{&encoder, &decoder, ft_rate, ft_alpha};
      FineTuneConfig fcfg;
      fcfg.beta = ft_beta >= 0.0 ? ft_beta : cfg.beta;
      fcfg.epochs = cfg.finetune_epochs;
      fcfg.seed = seed;
      fcfg.rate = ft_rate;
      fcfg.batch_size = cfg.batch_size;
      fcfg.lr = cfg.classifier_lr;
      auto log = finetune(
          classifier, data,
          [&pipeline](const LabeledImage& img, uint64_t s) {
            return pipeline.reconstruct(img, s);
          },
          fcfg);
      for (const FineTuneStats& row : log) {
        std::printf(
            "finetune epoch %zu loss %.6g acc_original %.4f acc_compressed %.4f\n",
            row.epoch, row.loss, row.accuracy_original, row.accuracy_compressed);
      }
      classifier.save(ft_out);
      std::printf("saved fine-tuned classifier to %s\n", ft_out.c_str());
      return 0;
    }

    if (eval_cmd->parsed()) {
      encoder.load(ev_encoder);
      decoder.load(ev_decoder);
      ClassifierConfig ccfg{cfg.vit.num_classes, cfg.vit.image_h, cfg.vit.image_w};
      ClassifierModel classifier(ccfg, seed);
      classifier.load(ev_classifier);
      FrozenPipeline pipeline{&encoder, &decoder, ev_rate, ev_alpha};
      std::vector<LabeledImage> compressed;
      compressed.reserve(data.images.size());
      for (const LabeledImage& img : data.images) {
        LabeledImage c;
        c.pixels = pipeline.reconstruct(img, derive_seed(seed, 0x6576616c, img.id));
        c.label = img.label;
        c.id = img.id;
        compressed.push_back(std::move(c));
      }
      std::printf("accuracy_original %.4f\n", evaluate(classifier, data.images));
      std::printf("accuracy_compressed %.4f\n", evaluate(classifier, compressed));
      return 0;
    }

    // dump-examples
    encoder.load(dp_encoder);
    decoder.load(dp_decoder);
    FrozenPipeline pipeline{&encoder, &decoder, dp_rate, dp_alpha};
    std::vector<LabeledImage> subset(
        data.images.begin(),
        data.images.begin() +
            std::min(dp_count, data.images.size()));
    dump_examples(pipeline, subset, cfg.vit.num_classes, dp_out, seed);
    std::printf("wrote %zu example pairs to %s\n", subset.size(), dp_out.c_str());
    return 0;
  }

  if (runall->parsed()) {
    if (!runall_out.empty()) cfg.out_dir = runall_out;
    run_pipeline(cfg);
    std::printf("run complete; metrics at %s/metrics.csv\n", cfg.out_dir.c_str());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const semcom::ParseError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "argument error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
