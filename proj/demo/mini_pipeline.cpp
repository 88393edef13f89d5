// Minimal end-to-end library usage: synthesize a small labeled corpus, train
// the pad encoder briefly, and score the held-out documents.

#include <cstdio>

#include "vwg/objective.hpp"
#include "vwg/pipeline.hpp"
#include "vwg/synth.hpp"

int main() {
  vwg::SynthConfig synth;
  synth.num_docs = 20;
  synth.variant = vwg::SynthVariant::visual_keyed;
  synth.image_width = 256;
  synth.image_height = 256;
  synth.seed = 1;
  const vwg::Dataset ds = vwg::synth_generate(synth);

  const vwg::GridSpec spec{32, 32, 8};
  vwg::Embedder embedder;
  embedder.dim = spec.dim;

  const vwg::ArchConfig arch = vwg::make_arch(vwg::EncoderKind::vwg_pad, spec, ds.schema, 8, 2);
  vwg::TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 4;
  cfg.seed = 1;
  cfg.patience = 15;
  cfg.encoder_kind = vwg::EncoderKind::vwg_pad;

  const vwg::FoldSplit split = vwg::split_train_val_test(static_cast<int>(ds.docs.size()), 1);
  const vwg::FoldOutcome outcome = vwg::run_fold(ds, split, arch, spec, embedder, cfg);

  std::printf("epochs run: %zu, best val mIoU %.3f\n", outcome.history.size(),
              outcome.checkpoint.best_val_miou);
  std::printf("test WAR %.3f, FAR %.3f over %zu docs\n", outcome.test_report.dataset_war,
              outcome.test_report.dataset_far, outcome.test_report.per_doc.size());
  return 0;
}
