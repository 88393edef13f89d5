#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vwg/objective.hpp"
#include "vwg/synth.hpp"

namespace {

namespace fs = std::filesystem;

vwg::Tensor one_hot_probs(const vwg::LabelMask& mask, int classes, float hot = 1.0f) {
  vwg::Tensor t(mask.rows, mask.cols, classes);
  const float cold = (1.0f - hot) / static_cast<float>(classes - 1);
  for (int r = 0; r < mask.rows; ++r)
    for (int c = 0; c < mask.cols; ++c)
      for (int k = 0; k < classes; ++k) t.at(r, c, k) = k == mask.at(r, c) ? hot : cold;
  return t;
}

TEST(CeLoss, PerfectPredictionIsZero) {
  vwg::LabelMask mask(2, 2);
  mask.at(0, 1) = 1;
  const auto [loss, grad] = vwg::ce_loss(one_hot_probs(mask, 3), mask);
  EXPECT_NEAR(loss, 0.0, 1e-9);
}

TEST(CeLoss, UniformPredictionIsLogK1) {
  vwg::LabelMask mask(4, 4);
  vwg::Tensor probs(4, 4, 5);
  for (auto& v : probs.v) v = 0.2f;
  const auto [loss, grad] = vwg::ce_loss(probs, mask);
  EXPECT_NEAR(loss, std::log(5.0), 1e-6);
}

TEST(CeLoss, TwoCellHandCase) {
  vwg::LabelMask mask(1, 2);
  vwg::Tensor probs(1, 2, 2);
  probs.at(0, 0, 0) = 0.5f;
  probs.at(0, 0, 1) = 0.5f;
  probs.at(0, 1, 0) = 0.25f;
  probs.at(0, 1, 1) = 0.75f;
  const auto [loss, grad] = vwg::ce_loss(probs, mask);
  EXPECT_NEAR(loss, 1.0397, 1e-4);
}

TEST(CeLoss, GradientIsSoftmaxCeOverN) {
  vwg::LabelMask mask(1, 1);
  mask.at(0, 0) = 1;
  vwg::Tensor probs(1, 1, 3);
  probs.at(0, 0, 0) = 0.2f;
  probs.at(0, 0, 1) = 0.5f;
  probs.at(0, 0, 2) = 0.3f;
  const auto [loss, grad] = vwg::ce_loss(probs, mask);
  EXPECT_FLOAT_EQ(grad.at(0, 0, 0), 0.2f);
  EXPECT_FLOAT_EQ(grad.at(0, 0, 1), -0.5f);
  EXPECT_FLOAT_EQ(grad.at(0, 0, 2), 0.3f);
}

TEST(JaccardLoss, PerfectMatchNearZero) {
  vwg::FieldSchema schema{{"a", "b"}};
  vwg::LabelMask mask(4, 4);
  mask.at(0, 0) = 1;
  mask.at(1, 1) = 2;
  const auto [loss, grad] = vwg::jaccard_loss(one_hot_probs(mask, 3), mask, schema);
  EXPECT_NEAR(loss, 0.0, 1e-5);
}

TEST(JaccardLoss, DisjointNonemptyNearOne) {
  vwg::FieldSchema schema{{"a"}};
  vwg::LabelMask gt(2, 2), pred(2, 2);
  gt.at(0, 0) = 1;
  gt.at(0, 1) = 1;
  pred.at(1, 0) = 1;
  pred.at(1, 1) = 1;
  const auto [loss, grad] = vwg::jaccard_loss(one_hot_probs(pred, 2), gt, schema);
  EXPECT_NEAR(loss, 1.0, 1e-5);
}

TEST(JaccardLoss, HalfOverlapHandCase) {
  vwg::FieldSchema schema{{"a"}};
  vwg::LabelMask gt(2, 2), pred(2, 2);
  gt.at(0, 0) = 1;
  gt.at(0, 1) = 1;
  for (auto& v : pred.v) v = 1;  // covers the 2 true cells plus 2 others
  const auto [loss, grad] = vwg::jaccard_loss(one_hot_probs(pred, 2), gt, schema);
  EXPECT_NEAR(loss, 0.5, 1e-5);
}

TEST(JaccardLoss, BoundsHold) {
  vwg::FieldSchema schema{{"a", "b"}};
  vwg::Xoshiro256 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    vwg::LabelMask mask(3, 3);
    for (auto& v : mask.v) v = static_cast<std::int32_t>(rng.next_below(3));
    vwg::Tensor probs(3, 3, 3);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double sum = 0;
        for (int k = 0; k < 3; ++k) {
          probs.at(r, c, k) = static_cast<float>(rng.next_double()) + 1e-3f;
          sum += probs.at(r, c, k);
        }
        for (int k = 0; k < 3; ++k) probs.at(r, c, k) /= static_cast<float>(sum);
      }
    const auto [loss, grad] = vwg::jaccard_loss(probs, mask, schema);
    ASSERT_GE(loss, 0.0);
    ASSERT_LE(loss, 1.0);
  }
}

// flipping one background cell of a hard prediction to a wrong foreground
// class never decreases the loss; checked against a direct evaluation of the
// soft-Jaccard formula on every 2x2 mask pair
TEST(JaccardLoss, MonotoneUnderWrongFlips) {
  vwg::FieldSchema schema{{"a", "b"}};
  const int K = 2;
  auto direct_formula = [&](const vwg::LabelMask& pred, const vwg::LabelMask& gt) {
    double mean = 0;
    for (int c = 1; c <= K; ++c) {
      double inter = 0, uni = 0;
      for (int i = 0; i < 4; ++i) {
        const double p = pred.v[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
        const double t = gt.v[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
        inter += p * t;
        uni += p + t - p * t;
      }
      mean += (inter + 1e-7) / (uni + 1e-7);
    }
    return 1.0 - mean / K;
  };
  for (int gt_code = 0; gt_code < 81; ++gt_code) {
    vwg::LabelMask gt(2, 2);
    int g = gt_code;
    for (auto& v : gt.v) {
      v = g % 3;
      g /= 3;
    }
    for (int pred_code = 0; pred_code < 81; ++pred_code) {
      vwg::LabelMask pred(2, 2);
      int p = pred_code;
      for (auto& v : pred.v) {
        v = p % 3;
        p /= 3;
      }
      const auto [before, grad_b] = vwg::jaccard_loss(one_hot_probs(pred, 3), gt, schema);
      ASSERT_NEAR(before, direct_formula(pred, gt), 1e-9);
      for (int cell = 0; cell < 4; ++cell) {
        if (pred.v[static_cast<std::size_t>(cell)] != 0) continue;
        for (int wrong = 1; wrong <= K; ++wrong) {
          if (gt.v[static_cast<std::size_t>(cell)] == wrong) continue;
          vwg::LabelMask flipped = pred;
          flipped.v[static_cast<std::size_t>(cell)] = wrong;
          const auto [after, grad_a] = vwg::jaccard_loss(one_hot_probs(flipped, 3), gt, schema);
          ASSERT_GE(after, before - 1e-12);
        }
      }
    }
  }
}

TEST(CombinedLoss, TotalIsExactSumAndGradComposes) {
  vwg::FieldSchema schema{{"a", "b"}};
  vwg::LabelMask mask(4, 4);
  mask.at(0, 0) = 1;
  mask.at(3, 3) = 2;
  vwg::Tensor probs(4, 4, 3);
  vwg::Xoshiro256 rng(8);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      double sum = 0;
      for (int k = 0; k < 3; ++k) {
        probs.at(r, c, k) = static_cast<float>(rng.next_double()) + 0.05f;
        sum += probs.at(r, c, k);
      }
      for (int k = 0; k < 3; ++k) probs.at(r, c, k) /= static_cast<float>(sum);
    }
  const auto [lv, grad] = vwg::combined_loss(probs, mask, schema);
  EXPECT_EQ(lv.total, lv.ce + lv.jaccard);
  EXPECT_GE(lv.total, lv.ce);

  const auto [ce, ce_grad] = vwg::ce_loss(probs, mask);
  const auto [jac, jac_grad_p] = vwg::jaccard_loss(probs, mask, schema);
  const vwg::Tensor jac_grad = vwg::softmax_vjp(probs, jac_grad_p);
  for (std::size_t i = 0; i < grad.v.size(); ++i)
    ASSERT_FLOAT_EQ(grad.v[i], ce_grad.v[i] + jac_grad.v[i]);
}

vwg::ParamSet single_tensor_params(float value) {
  vwg::ParamSet p;
  p.tensors.emplace_back("w", std::vector<int>{4});
  for (auto& v : p.tensors[0].v) v = value;
  return p;
}

TEST(Adam, ZeroGradientIsIdentity) {
  vwg::ParamSet params = single_tensor_params(1.5f);
  vwg::AdamState state(params);
  const vwg::ParamSet grads = single_tensor_params(0.0f);
  vwg::adam_step(state, params, grads);
  EXPECT_EQ(state.t, 1);
  for (float v : params.tensors[0].v) EXPECT_EQ(v, 1.5f);
}

TEST(Adam, FirstStepClosedForm) {
  vwg::ParamSet params = single_tensor_params(1.0f);
  vwg::AdamState state(params);
  const vwg::ParamSet grads = single_tensor_params(0.5f);
  vwg::adam_step(state, params, grads);
  // m_hat = 0.5, v_hat = 0.25, delta = -0.001 * 0.5 / (0.5 + 1e-8); the
  // parameter store is f32, so allow one ulp around 0.999
  for (float v : params.tensors[0].v) EXPECT_NEAR(v, 1.0 - 0.001, 1e-7);
}

TEST(Adam, FirstStepMagnitudeIsLr) {
  for (float g : {-0.3f, 0.02f, 7.0f}) {
    vwg::ParamSet params = single_tensor_params(0.0f);
    vwg::AdamState state(params);
    vwg::adam_step(state, params, single_tensor_params(g));
    for (float v : params.tensors[0].v) EXPECT_NEAR(std::abs(v), 0.001, 1e-6);
  }
}

TEST(Adam, NonFiniteGradientRejected) {
  vwg::ParamSet params = single_tensor_params(0.0f);
  vwg::AdamState state(params);
  vwg::ParamSet grads = single_tensor_params(0.0f);
  grads.tensors[0].v[2] = std::nanf("");
  EXPECT_THROW(vwg::adam_step(state, params, grads), vwg::NonFiniteGradient);
}

// --- training loop ---

struct TrainFixture {
  vwg::Dataset ds;
  vwg::GridSpec spec{32, 32, 8};
  vwg::Embedder embedder;
  vwg::ArchConfig arch;

  explicit TrainFixture(int docs = 6) {
    vwg::SynthConfig cfg;
    cfg.num_docs = docs;
    cfg.image_width = 128;
    cfg.image_height = 128;
    cfg.seed = 100;
    ds = vwg::synth_generate(cfg);
    embedder.dim = 8;
    arch = vwg::make_arch(vwg::EncoderKind::vwg_pad, spec, ds.schema, 4, 2);
  }
};

TEST(Train, DeterministicHistoriesAndParams) {
  TrainFixture fx;
  vwg::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.seed = 5;
  cfg.patience = 10;
  const auto a = vwg::train(fx.ds, {0, 1, 2, 3}, {4, 5}, fx.arch, fx.spec, fx.embedder, cfg);
  const auto b = vwg::train(fx.ds, {0, 1, 2, 3}, {4, 5}, fx.arch, fx.spec, fx.embedder, cfg);
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_miou, b.history[i].val_miou);
  }
  for (std::size_t t = 0; t < a.checkpoint.params.tensors.size(); ++t)
    EXPECT_EQ(a.checkpoint.params.tensors[t].v, b.checkpoint.params.tensors[t].v);
}

TEST(Train, EarlyStopsOnPlateau) {
  TrainFixture fx;
  // all-background ground truth saturates validation mIoU at 1.0 immediately
  for (auto& ldoc : fx.ds.docs) {
    for (auto& [name, rects] : ldoc.annotation.regions) rects.clear();
    ldoc.gt_assignment.assign(ldoc.document.tokens.size(), 0);
  }
  vwg::TrainConfig cfg;
  cfg.epochs = 120;
  cfg.batch_size = 1;
  cfg.seed = 6;
  cfg.patience = 40;
  const auto result = vwg::train(fx.ds, {0, 1, 2, 3}, {4, 5}, fx.arch, fx.spec, fx.embedder, cfg);
  EXPECT_LT(result.history.size(), 120u);
  EXPECT_EQ(result.checkpoint.best_val_miou, 1.0);
  // stopped exactly `patience` epochs after the best one
  EXPECT_EQ(static_cast<int>(result.history.size()), result.checkpoint.epochs_trained + cfg.patience);
}

TEST(Train, EmptySplitsRejected) {
  TrainFixture fx;
  vwg::TrainConfig cfg;
  EXPECT_THROW(vwg::train(fx.ds, {}, {0}, fx.arch, fx.spec, fx.embedder, cfg), vwg::EmptySplit);
  EXPECT_THROW(vwg::train(fx.ds, {0}, {}, fx.arch, fx.spec, fx.embedder, cfg), vwg::EmptySplit);
}

TEST(Checkpoint, RoundTripBitExactForward) {
  TrainFixture fx;
  vwg::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 7;
  const auto result = vwg::train(fx.ds, {0, 1, 2, 3}, {4, 5}, fx.arch, fx.spec, fx.embedder, cfg);
  const std::string path =
      (fs::temp_directory_path() / ("vwg_ckpt_" + std::to_string(::getpid()) + ".vwgm")).string();
  vwg::save_checkpoint(path, result.checkpoint);
  const vwg::Checkpoint back = vwg::load_checkpoint(path);

  ASSERT_EQ(back.params.tensors.size(), result.checkpoint.params.tensors.size());
  for (std::size_t i = 0; i < back.params.tensors.size(); ++i) {
    EXPECT_EQ(back.params.tensors[i].name, result.checkpoint.params.tensors[i].name);
    ASSERT_EQ(back.params.tensors[i].v.size(), result.checkpoint.params.tensors[i].v.size());
    for (std::size_t k = 0; k < back.params.tensors[i].v.size(); ++k)
      ASSERT_EQ(std::bit_cast<std::uint32_t>(back.params.tensors[i].v[k]),
                std::bit_cast<std::uint32_t>(result.checkpoint.params.tensors[i].v[k]));
  }
  EXPECT_EQ(back.schema, result.checkpoint.schema);
  EXPECT_EQ(back.grid.rows, fx.spec.rows);
  EXPECT_EQ(back.best_val_miou, result.checkpoint.best_val_miou);

  const auto input = vwg::encode_document(fx.ds.docs[0].document, back.encoder_kind, back.grid, back.embedder);
  auto [p1, c1] = vwg::forward(result.checkpoint.params, result.checkpoint.arch, input.main);
  auto [p2, c2] = vwg::forward(back.params, back.arch, input.main);
  EXPECT_EQ(p1.v, p2.v);
  fs::remove(path);
}

TEST(Checkpoint, TruncatedFileRejected) {
  TrainFixture fx(6);
  vwg::Checkpoint ck;
  ck.arch = fx.arch;
  ck.schema = fx.ds.schema;
  ck.grid = fx.spec;
  ck.embedder = fx.embedder;
  ck.params = vwg::init_params(fx.arch, 1);
  const std::string path =
      (fs::temp_directory_path() / ("vwg_trunc_" + std::to_string(::getpid()) + ".vwgm")).string();
  vwg::save_checkpoint(path, ck);
  fs::resize_file(path, fs::file_size(path) / 2);
  EXPECT_THROW(vwg::load_checkpoint(path), vwg::IoFailure);
  fs::remove(path);
}

TEST(Checkpoint, BadMagicAndVersionRejected) {
  const std::string path =
      (fs::temp_directory_path() / ("vwg_badck_" + std::to_string(::getpid()) + ".vwgm")).string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "XXXX and then some";
  }
  EXPECT_THROW(vwg::load_checkpoint(path), vwg::BadMagic);
  {
    std::ofstream os(path, std::ios::binary);
    os << "VWGM";
    const std::uint32_t version = 99;
    os.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint32_t len = 0;
    os.write(reinterpret_cast<const char*>(&len), 4);
  }
  EXPECT_THROW(vwg::load_checkpoint(path), vwg::VersionMismatch);
  fs::remove(path);
}

TEST(Checkpoint, DualCheckpointRejectsSingleInput) {
  TrainFixture fx;
  vwg::Checkpoint ck;
  ck.arch = vwg::make_arch(vwg::EncoderKind::vwg_2enc, fx.spec, fx.ds.schema, 4, 2);
  ck.params = vwg::init_params(ck.arch, 2);
  const vwg::Tensor wordgrid_only(32, 32, 8);
  EXPECT_THROW((void)vwg::forward(ck.params, ck.arch, wordgrid_only), vwg::ShapeMismatch);
}

}  // namespace
