#include <gtest/gtest.h>

#include <set>

#include "vwg/extract.hpp"
#include "vwg/grid.hpp"
#include "vwg/synth.hpp"

namespace {

TEST(ArgmaxMask, UniformTiesGoToBackground) {
  vwg::Tensor probs(2, 2, 4);
  for (auto& v : probs.v) v = 0.25f;
  const vwg::LabelMask m = vwg::argmax_mask(probs);
  for (auto v : m.v) ASSERT_EQ(v, 0);
}

TEST(ArgmaxMask, OneHotRecovered) {
  vwg::Tensor probs(2, 2, 3);
  probs.at(0, 0, 2) = 1.0f;
  probs.at(0, 1, 1) = 1.0f;
  probs.at(1, 0, 0) = 1.0f;
  probs.at(1, 1, 2) = 1.0f;
  const vwg::LabelMask m = vwg::argmax_mask(probs);
  EXPECT_EQ(m.at(0, 0), 2);
  EXPECT_EQ(m.at(0, 1), 1);
  EXPECT_EQ(m.at(1, 0), 0);
  EXPECT_EQ(m.at(1, 1), 2);
}

TEST(ArgmaxMask, PartialTieLowerIndexWins) {
  vwg::Tensor probs(1, 1, 3);
  probs.at(0, 0, 0) = 0.4f;
  probs.at(0, 0, 1) = 0.4f;
  probs.at(0, 0, 2) = 0.2f;
  EXPECT_EQ(vwg::argmax_mask(probs).at(0, 0), 0);
}

struct AssignFixture {
  vwg::RGBImage image{64, 64};
  vwg::GridSpec spec{4, 4, 8};
  // token covering grid cells rows [1,3) x cols [1,3)
  vwg::TokenBox token{0, "x", 16, 16, 32, 32};
};

TEST(AssignTokenClass, FullCoverage) {
  AssignFixture fx;
  vwg::LabelMask mask(4, 4);
  for (int r = 1; r < 3; ++r)
    for (int c = 1; c < 3; ++c) mask.at(r, c) = 2;
  EXPECT_EQ(vwg::assign_token_class(fx.token, mask, fx.image, fx.spec), 2);
}

TEST(AssignTokenClass, QuarterCoverageIsBackground) {
  AssignFixture fx;
  vwg::LabelMask mask(4, 4);
  mask.at(1, 1) = 2;  // 1 of 4 token cells
  EXPECT_EQ(vwg::assign_token_class(fx.token, mask, fx.image, fx.spec), 0);
}

TEST(AssignTokenClass, CoverageTieLowerClassWins) {
  AssignFixture fx;
  vwg::LabelMask mask(4, 4);
  mask.at(1, 1) = 3;
  mask.at(1, 2) = 3;
  mask.at(2, 1) = 1;
  mask.at(2, 2) = 1;
  EXPECT_EQ(vwg::assign_token_class(fx.token, mask, fx.image, fx.spec), 1);
}

TEST(DecodeFields, EmptyMaskGivesEmptyFields) {
  vwg::SynthConfig cfg;
  cfg.num_docs = 1;
  cfg.seed = 3;
  const auto ds = vwg::synth_generate(cfg);
  const vwg::GridSpec spec{64, 64, 8};
  vwg::Tensor probs(64, 64, ds.schema.num_classes());
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) probs.at(r, c, 0) = 1.0f;
  const vwg::FieldPrediction pred = vwg::decode_fields(ds.docs[0].document, probs, spec, ds.schema);
  for (const auto& [name, field] : pred.fields) {
    EXPECT_TRUE(field.tokens.empty());
    EXPECT_EQ(field.text, "");
  }
}

TEST(DecodeFields, JoinsInReadingOrder) {
  vwg::Document doc;
  doc.id = "order";
  doc.image = vwg::RGBImage(64, 64);
  // six 1-cell tokens on a 8x8 grid; indexes 2 ("due") and 5 ("total") carry class 3
  for (int i = 0; i < 6; ++i) doc.tokens.push_back({i, "w" + std::to_string(i), i * 8, 0, 8, 8});
  doc.tokens[2].text = "Due";
  doc.tokens[5].text = "Total";
  doc.tokens[5].y = 16;
  vwg::GridSpec spec{8, 8, 8};
  vwg::LabelMask mask(8, 8);
  mask.at(0, 2) = 3;  // token 2
  mask.at(2, 5) = 3;  // token 5
  const vwg::FieldSchema schema{{"a", "b", "c"}};
  const vwg::FieldPrediction pred = vwg::decode_fields_from_mask(doc, mask, spec, schema);
  EXPECT_EQ(pred.fields.at("c").tokens, (std::vector<int>{2, 5}));
  EXPECT_EQ(pred.fields.at("c").text, "due total");
  EXPECT_TRUE(pred.fields.at("a").tokens.empty());
}

TEST(DecodeFields, ProbsAndArgmaxOneHotAgree) {
  vwg::SynthConfig cfg;
  cfg.num_docs = 5;
  cfg.seed = 12;
  const auto ds = vwg::synth_generate(cfg);
  const vwg::GridSpec spec{64, 64, 8};
  vwg::Xoshiro256 rng(5);
  for (const auto& ldoc : ds.docs) {
    vwg::Tensor probs(64, 64, ds.schema.num_classes());
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) {
        double sum = 0;
        for (int k = 0; k < probs.channels; ++k) {
          probs.at(r, c, k) = static_cast<float>(rng.next_double()) + 0.01f;
          sum += probs.at(r, c, k);
        }
        for (int k = 0; k < probs.channels; ++k) probs.at(r, c, k) /= static_cast<float>(sum);
      }
    const vwg::LabelMask hard = vwg::argmax_mask(probs);
    vwg::Tensor one_hot(64, 64, probs.channels);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) one_hot.at(r, c, hard.at(r, c)) = 1.0f;
    const auto a = vwg::decode_fields(ldoc.document, probs, spec, ds.schema);
    const auto b = vwg::decode_fields(ldoc.document, one_hot, spec, ds.schema);
    for (const auto& [name, field] : a.fields) {
      ASSERT_EQ(field.tokens, b.fields.at(name).tokens);
      ASSERT_EQ(field.text, b.fields.at(name).text);
    }
  }
}

// ground-truth mask -> decode reproduces the ground-truth token sets whenever
// no two tokens of different classes share a cell
TEST(DecodeFields, GroundTruthRoundTrip) {
  vwg::SynthConfig cfg;
  cfg.num_docs = 100;
  cfg.variant = vwg::SynthVariant::visual_keyed;
  cfg.seed = 2024;
  const auto ds = vwg::synth_generate(cfg);
  const vwg::GridSpec spec{64, 64, 8};
  int checked = 0;
  for (const auto& ldoc : ds.docs) {
    // verify the no-cross-class-cell-sharing precondition
    vwg::LabelMask owner(spec.rows, spec.cols);
    bool clash = false;
    for (std::size_t i = 0; i < ldoc.document.tokens.size() && !clash; ++i) {
      const vwg::CellBox cb = vwg::scale_box(ldoc.document.tokens[i], ldoc.document.image, spec);
      const int cls = ldoc.gt_assignment[i];
      for (int r = cb.row_start; r < cb.row_end && !clash; ++r)
        for (int c = cb.col_start; c < cb.col_end && !clash; ++c) {
          if (owner.at(r, c) != 0 && owner.at(r, c) != cls + 1) clash = true;
          owner.at(r, c) = cls + 1;
        }
    }
    ASSERT_FALSE(clash) << "generator spacing violated for " << ldoc.document.id;

    const vwg::LabelMask mask = vwg::rasterize_target_mask(ldoc, spec);
    const vwg::FieldPrediction pred = vwg::decode_fields_from_mask(ldoc.document, mask, spec, ds.schema);
    std::map<std::string, std::vector<int>> gt_sets;
    for (const auto& name : ds.schema.field_names) gt_sets[name] = {};
    for (std::size_t i = 0; i < ldoc.document.tokens.size(); ++i)
      if (ldoc.gt_assignment[i] > 0)
        gt_sets[ds.schema.name_of(ldoc.gt_assignment[i])].push_back(static_cast<int>(i));
    for (const auto& [name, tokens] : gt_sets) ASSERT_EQ(pred.fields.at(name).tokens, tokens) << name;
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(DecodeFields, EveryTokenInExactlyOnePlace) {
  vwg::SynthConfig cfg;
  cfg.num_docs = 10;
  cfg.seed = 55;
  const auto ds = vwg::synth_generate(cfg);
  const vwg::GridSpec spec{64, 64, 8};
  for (const auto& ldoc : ds.docs) {
    const vwg::LabelMask mask = vwg::rasterize_target_mask(ldoc, spec);
    const auto pred = vwg::decode_fields_from_mask(ldoc.document, mask, spec, ds.schema);
    std::set<int> assigned;
    for (const auto& [name, field] : pred.fields)
      for (int t : field.tokens) ASSERT_TRUE(assigned.insert(t).second);
    for (int t : assigned) {
      ASSERT_GE(t, 0);
      ASSERT_LT(t, static_cast<int>(ldoc.document.tokens.size()));
    }
  }
}

}  // namespace
