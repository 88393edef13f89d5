// Command-line front end for the VisualWordGrid pipeline: synthesize labeled
// documents, encode grids, train, predict, evaluate, and run the k-fold
// encoder ablation.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vwg/corpus.hpp"
#include "vwg/embed.hpp"
#include "vwg/error.hpp"
#include "vwg/extract.hpp"
#include "vwg/grid.hpp"
#include "vwg/metrics.hpp"
#include "vwg/net.hpp"
#include "vwg/objective.hpp"
#include "vwg/pipeline.hpp"
#include "vwg/synth.hpp"
#include "vwg/tensor.hpp"

namespace {

constexpr const char* kToolVersion = "0.1.0";

namespace fs = std::filesystem;
using nlohmann::json;

struct StopWatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// The manifest sits next to the output (not inside it) so rerunning a command
// with identical flags leaves the output directory byte-identical.
void write_run_manifest(const std::string& out_path, const std::string& command, const json& config,
                        std::uint64_t seed, const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs, double wall_clock) {
  json j;
  j["command"] = command;
  j["config"] = config;
  char seedbuf[32];
  std::snprintf(seedbuf, sizeof(seedbuf), "%016llx", static_cast<unsigned long long>(seed));
  j["seed"] = std::string(seedbuf);
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["tool_version"] = kToolVersion;
  j["wall_clock_seconds"] = wall_clock;
  std::ofstream os(out_path + ".run.json");
  if (!os) throw vwg::IoFailure("cannot write run manifest: " + out_path + ".run.json");
  os << j.dump(2) << "\n";
}

std::pair<int, int> parse_grid(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw CLI::ValidationError("--grid", "expected HxW, e.g. 64x64");
  try {
    const int h = std::stoi(s.substr(0, x));
    const int w = std::stoi(s.substr(x + 1));
    if (h < 8 || w < 8) throw CLI::ValidationError("--grid", "grid dims must be >= 8");
    return {h, w};
  } catch (const std::invalid_argument&) {
    throw CLI::ValidationError("--grid", "expected HxW, e.g. 64x64");
  }
}

vwg::GridSpec make_spec(const std::string& grid, int dim) {
  const auto [h, w] = parse_grid(grid);
  return vwg::GridSpec{h, w, dim};
}

std::string history_json(const std::vector<vwg::EpochStats>& history) {
  json arr = json::array();
  for (const auto& e : history)
    arr.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_miou", e.val_miou}});
  return arr.dump(2);
}

// --- subcommand payloads -------------------------------------------------

struct SynthArgs {
  std::string out;
  int num = 8;
  std::string variant = "visual";
  std::uint64_t seed = 0;
  int width = 512;
  int height = 512;
};

int run_synth(const SynthArgs& a) {
  StopWatch watch;
  vwg::SynthConfig cfg;
  cfg.num_docs = a.num;
  cfg.variant = a.variant == "text" ? vwg::SynthVariant::text_keyed : vwg::SynthVariant::visual_keyed;
  cfg.seed = a.seed;
  cfg.image_width = a.width;
  cfg.image_height = a.height;
  const vwg::Dataset ds = vwg::synth_generate(cfg);
  vwg::write_dataset(ds, a.out);
  write_run_manifest(a.out, "synth",
                     {{"num", a.num}, {"variant", a.variant}, {"width", a.width}, {"height", a.height}},
                     a.seed, {}, {a.out}, watch.seconds());
  std::cout << "wrote " << ds.docs.size() << " documents to " << a.out << "\n";
  return 0;
}

struct EncodeArgs {
  std::string dataset;
  std::string encoder = "vwg-pad";
  std::string grid = "64x64";
  int dim = 32;
  std::string out;
};

int run_encode(const EncodeArgs& a) {
  StopWatch watch;
  const vwg::Dataset ds = vwg::load_dataset(a.dataset);
  const vwg::EncoderKind kind = vwg::parse_encoder_kind(a.encoder);
  const vwg::GridSpec spec = make_spec(a.grid, a.dim);
  vwg::Embedder embedder;
  embedder.dim = a.dim;
  fs::create_directories(a.out);
  for (const auto& ldoc : ds.docs) {
    const std::string stem = (fs::path(a.out) / ldoc.document.id).string();
    const vwg::EncodedInput enc = vwg::encode_document(ldoc.document, kind, spec, embedder);
    vwg::write_tensor(stem + "." + a.encoder + ".vwgt", enc.main);
    if (enc.aux) vwg::write_tensor(stem + ".image.vwgt", *enc.aux);
    vwg::write_mask(stem + ".mask.vwgt", vwg::rasterize_target_mask(ldoc, spec));
  }
  write_run_manifest(a.out, "encode",
                     {{"encoder", a.encoder}, {"grid", a.grid}, {"dim", a.dim}, {"dataset", a.dataset}}, 0,
                     {a.dataset}, {a.out}, watch.seconds());
  std::cout << "encoded " << ds.docs.size() << " documents to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string dataset;
  std::string encoder = "vwg-pad";
  std::string grid = "64x64";
  int dim = 16;
  int epochs = 100;
  int batch_size = 8;
  int patience = 20;
  int base = 8;
  int depth = 3;
  double holdout = 0.2;
  std::uint64_t seed = 0;
  std::string out;
};

int run_train(const TrainArgs& a) {
  StopWatch watch;
  const vwg::Dataset ds = vwg::load_dataset(a.dataset);
  const vwg::EncoderKind kind = vwg::parse_encoder_kind(a.encoder);
  const vwg::GridSpec spec = make_spec(a.grid, a.dim);
  vwg::Embedder embedder;
  embedder.dim = a.dim;
  const vwg::ArchConfig arch = vwg::make_arch(kind, spec, ds.schema, a.base, a.depth);

  vwg::FoldSplit split;
  if (a.holdout == 0.0) {
    split.train = split.validation = split.test = vwg::all_indices(ds);  // overfit mode
  } else {
    split = vwg::split_train_val_test(static_cast<int>(ds.docs.size()), a.seed);
  }

  vwg::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.seed = a.seed;
  cfg.patience = a.patience;
  cfg.encoder_kind = kind;
  const vwg::TrainResult result = vwg::train(ds, split.train, split.validation, arch, spec, embedder, cfg);

  vwg::save_checkpoint(a.out, result.checkpoint);
  std::ofstream hist(a.out + ".history.json");
  hist << history_json(result.history) << "\n";
  write_run_manifest(a.out, "train",
                     {{"encoder", a.encoder},
                      {"grid", a.grid},
                      {"dim", a.dim},
                      {"epochs", a.epochs},
                      {"batch_size", a.batch_size},
                      {"patience", a.patience},
                      {"base", a.base},
                      {"depth", a.depth},
                      {"holdout", a.holdout},
                      {"dataset", a.dataset}},
                     a.seed, {a.dataset}, {a.out, a.out + ".history.json"}, watch.seconds());
  std::cout << "trained " << a.encoder << " for " << result.history.size() << " epochs, best val mIoU "
            << result.checkpoint.best_val_miou << "\n";
  return 0;
}

struct PredictArgs {
  std::string ckpt;
  std::string dataset;
  std::string out;
};

int run_predict(const PredictArgs& a) {
  StopWatch watch;
  const vwg::Checkpoint ck = vwg::load_checkpoint(a.ckpt);
  const vwg::Dataset ds = vwg::load_dataset(a.dataset);
  const auto preds = vwg::predict_documents(ck, ds, vwg::all_indices(ds));
  fs::create_directories(a.out);
  for (const auto& [id, pred] : preds) {
    std::ofstream os((fs::path(a.out) / (id + ".pred.json")).string());
    if (!os) throw vwg::IoFailure("cannot write prediction for " + id);
    os << vwg::prediction_to_json(id, pred).dump(2) << "\n";
  }
  write_run_manifest(a.out, "predict", {{"ckpt", a.ckpt}, {"dataset", a.dataset}}, 0,
                     {a.ckpt, a.dataset}, {a.out}, watch.seconds());
  std::cout << "wrote " << preds.size() << " predictions to " << a.out << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string pred;
  std::string dataset;
  std::string out;
};

int run_evaluate(const EvaluateArgs& a) {
  StopWatch watch;
  const vwg::Dataset ds = vwg::load_dataset(a.dataset);
  std::map<std::string, vwg::FieldPrediction> preds;
  for (const auto& ldoc : ds.docs) {
    const fs::path p = fs::path(a.pred) / (ldoc.document.id + ".pred.json");
    if (!fs::exists(p)) throw vwg::MissingPrediction("no prediction file for " + ldoc.document.id);
    preds[ldoc.document.id] = vwg::prediction_from_json(vwg::load_json_file(p.string()));
  }
  const vwg::Report rep = vwg::evaluate_dataset(ds, vwg::all_indices(ds), preds);
  std::ofstream os(a.out);
  if (!os) throw vwg::IoFailure("cannot write report: " + a.out);
  os << vwg::report_to_json(rep).dump(2) << "\n";
  write_run_manifest(a.out, "evaluate", {{"pred", a.pred}, {"dataset", a.dataset}}, 0,
                     {a.pred, a.dataset}, {a.out}, watch.seconds());
  std::cout << "WAR " << rep.dataset_war << "  FAR " << rep.dataset_far << "  -> " << a.out << "\n";
  return 0;
}

struct KfoldArgs {
  std::string dataset;
  std::vector<std::string> encoders{"layout", "wordgrid", "vwg-pad"};
  int k = 5;
  std::vector<std::uint64_t> seeds{0};
  std::string grid = "64x64";
  int dim = 16;
  int epochs = 30;
  int batch_size = 8;
  int patience = 6;
  int base = 8;
  int depth = 3;
  int max_folds = 0;  // 0 = all k folds
  std::string out;
};

int run_kfold(const KfoldArgs& a) {
  StopWatch watch;
  const vwg::Dataset ds = vwg::load_dataset(a.dataset);
  const vwg::GridSpec spec = make_spec(a.grid, a.dim);
  vwg::Embedder embedder;
  embedder.dim = a.dim;
  fs::create_directories(a.out);

  json table = json::array();
  for (const auto& encoder : a.encoders) {
    const vwg::EncoderKind kind = vwg::parse_encoder_kind(encoder);
    const vwg::ArchConfig arch = vwg::make_arch(kind, spec, ds.schema, a.base, a.depth);
    double war_sum = 0.0, far_sum = 0.0;
    int runs = 0;
    for (const std::uint64_t seed : a.seeds) {
      const auto folds = vwg::split_kfold(static_cast<int>(ds.docs.size()), a.k, seed);
      const int fold_count = a.max_folds > 0 ? std::min<int>(a.max_folds, a.k) : a.k;
      for (int f = 0; f < fold_count; ++f) {
        vwg::TrainConfig cfg;
        cfg.epochs = a.epochs;
        cfg.batch_size = a.batch_size;
        cfg.seed = seed;
        cfg.patience = a.patience;
        cfg.encoder_kind = kind;
        const vwg::FoldOutcome outcome =
            vwg::run_fold(ds, folds[static_cast<std::size_t>(f)], arch, spec, embedder, cfg);
        war_sum += outcome.test_report.dataset_war;
        far_sum += outcome.test_report.dataset_far;
        ++runs;
        char name[64];
        std::snprintf(name, sizeof(name), "%s_s%llu_f%d.report.json", encoder.c_str(),
                      static_cast<unsigned long long>(seed), f);
        std::ofstream os((fs::path(a.out) / name).string());
        os << vwg::report_to_json(outcome.test_report).dump(2) << "\n";
        std::cout << encoder << " seed " << seed << " fold " << f << ": WAR "
                  << outcome.test_report.dataset_war << " FAR " << outcome.test_report.dataset_far << "\n";
      }
    }
    table.push_back({{"approach", encoder},
                     {"far", far_sum / runs},
                     {"war", war_sum / runs},
                     {"parameters", vwg::param_count(arch)}});
  }
  std::ofstream os((fs::path(a.out) / "ablation.json").string());
  os << json{{"rows", table}}.dump(2) << "\n";

  std::cout << "\nApproach        FAR      WAR      #Parameters\n";
  for (const auto& row : table)
    std::printf("%-15s %.4f   %.4f   %lld\n", row["approach"].get<std::string>().c_str(),
                row["far"].get<double>(), row["war"].get<double>(),
                static_cast<long long>(row["parameters"].get<std::int64_t>()));
  write_run_manifest(a.out, "kfold",
                     {{"encoders", a.encoders},
                      {"k", a.k},
                      {"grid", a.grid},
                      {"dim", a.dim},
                      {"epochs", a.epochs},
                      {"max_folds", a.max_folds},
                      {"dataset", a.dataset}},
                     a.seeds.empty() ? 0 : a.seeds[0], {a.dataset}, {a.out}, watch.seconds());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VisualWordGrid document field extraction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "generate a deterministic synthetic dataset");
  cmd_synth->add_option("--out", synth.out, "output directory")->required();
  cmd_synth->add_option("--num", synth.num, "number of documents")->check(CLI::Range(1, 1000000));
  cmd_synth->add_option("--variant", synth.variant, "text|visual")
      ->check(CLI::IsMember({"text", "visual"}));
  cmd_synth->add_option("--seed", synth.seed, "generator seed");
  cmd_synth->add_option("--width", synth.width, "image width")->check(CLI::Range(64, 8192));
  cmd_synth->add_option("--height", synth.height, "image height")->check(CLI::Range(64, 8192));

  EncodeArgs encode;
  auto* cmd_encode = app.add_subcommand("encode", "rasterize documents into grid tensors");
  cmd_encode->add_option("--dataset", encode.dataset, "dataset manifest JSON")->required();
  cmd_encode->add_option("--encoder", encode.encoder, "layout|wordgrid|vwg-pad|vwg-2enc")
      ->check(CLI::IsMember({"layout", "wordgrid", "vwg-pad", "vwg-2enc"}));
  cmd_encode->add_option("--grid", encode.grid, "grid HxW");
  cmd_encode->add_option("--dim", encode.dim, "embedding dimension")->check(CLI::Range(1, 1024));
  cmd_encode->add_option("--out", encode.out, "output directory")->required();

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "train a segmentation model");
  cmd_train->add_option("--dataset", train.dataset, "dataset manifest JSON")->required();
  cmd_train->add_option("--encoder", train.encoder, "layout|wordgrid|vwg-pad|vwg-2enc")
      ->check(CLI::IsMember({"layout", "wordgrid", "vwg-pad", "vwg-2enc"}));
  cmd_train->add_option("--grid", train.grid, "grid HxW");
  cmd_train->add_option("--dim", train.dim, "embedding dimension")->check(CLI::Range(1, 1024));
  cmd_train->add_option("--epochs", train.epochs, "max epochs")->check(CLI::Range(1, 100000));
  cmd_train->add_option("--batch-size", train.batch_size, "batch size")->check(CLI::Range(1, 4096));
  cmd_train->add_option("--patience", train.patience, "early-stop patience")->check(CLI::Range(1, 100000));
  cmd_train->add_option("--base", train.base, "base channels")->check(CLI::Range(4, 512));
  cmd_train->add_option("--depth", train.depth, "downsampling stages")->check(CLI::Range(1, 6));
  cmd_train->add_option("--holdout", train.holdout, "held-out fraction (0 trains on everything)")
      ->check(CLI::Range(0.0, 0.5));
  cmd_train->add_option("--seed", train.seed, "training seed");
  cmd_train->add_option("--out", train.out, "checkpoint path")->required();

  PredictArgs predict;
  auto* cmd_predict = app.add_subcommand("predict", "decode field predictions with a checkpoint");
  cmd_predict->add_option("--ckpt", predict.ckpt, "checkpoint path")->required();
  cmd_predict->add_option("--dataset", predict.dataset, "dataset manifest JSON")->required();
  cmd_predict->add_option("--out", predict.out, "output directory")->required();

  EvaluateArgs evaluate;
  auto* cmd_evaluate = app.add_subcommand("evaluate", "score predictions against ground truth");
  cmd_evaluate->add_option("--pred", evaluate.pred, "prediction directory")->required();
  cmd_evaluate->add_option("--dataset", evaluate.dataset, "dataset manifest JSON")->required();
  cmd_evaluate->add_option("--out", evaluate.out, "report JSON path")->required();

  KfoldArgs kfold;
  auto* cmd_kfold = app.add_subcommand("kfold", "k-fold ablation over encoders");
  cmd_kfold->add_option("--dataset", kfold.dataset, "dataset manifest JSON")->required();
  cmd_kfold->add_option("--encoders", kfold.encoders, "encoders to compare")->delimiter(',');
  cmd_kfold->add_option("--k", kfold.k, "number of folds")->check(CLI::Range(2, 100));
  cmd_kfold->add_option("--seeds", kfold.seeds, "split/train seeds")->delimiter(',');
  cmd_kfold->add_option("--grid", kfold.grid, "grid HxW");
  cmd_kfold->add_option("--dim", kfold.dim, "embedding dimension")->check(CLI::Range(1, 1024));
  cmd_kfold->add_option("--epochs", kfold.epochs, "max epochs per run")->check(CLI::Range(1, 100000));
  cmd_kfold->add_option("--batch-size", kfold.batch_size, "batch size")->check(CLI::Range(1, 4096));
  cmd_kfold->add_option("--patience", kfold.patience, "early-stop patience")->check(CLI::Range(1, 100000));
  cmd_kfold->add_option("--base", kfold.base, "base channels")->check(CLI::Range(4, 512));
  cmd_kfold->add_option("--depth", kfold.depth, "downsampling stages")->check(CLI::Range(1, 6));
  cmd_kfold->add_option("--max-folds", kfold.max_folds, "limit folds per seed (0 = all)")
      ->check(CLI::Range(0, 100));
  cmd_kfold->add_option("--out", kfold.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (cmd_synth->parsed()) return run_synth(synth);
    if (cmd_encode->parsed()) return run_encode(encode);
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_predict->parsed()) return run_predict(predict);
    if (cmd_evaluate->parsed()) return run_evaluate(evaluate);
    if (cmd_kfold->parsed()) return run_kfold(kfold);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
