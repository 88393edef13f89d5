#pragma once

#include <map>
#include <string>
#include <vector>

#include "vwg/corpus.hpp"
#include "vwg/embed.hpp"
#include "vwg/grid.hpp"
#include "vwg/tensor.hpp"

namespace vwg {

// Decoded per-field token sequences. Token lists are ordered by OCR index;
// `text` joins the normalized token texts with single spaces.
struct FieldPrediction {
  struct Field {
    std::vector<int> tokens;
    std::string text;
  };
  std::map<std::string, Field> fields;
};

// Per-cell argmax, ties toward the lower class index.
template <typename T>
LabelMask argmax_mask(const TensorT<T>& probs) {
  LabelMask m(probs.rows, probs.cols);
  for (int r = 0; r < probs.rows; ++r)
    for (int c = 0; c < probs.cols; ++c) {
      const T* cell = probs.cell(r, c);
      int best = 0;
      for (int k = 1; k < probs.channels; ++k)
        if (cell[k] > cell[best]) best = k;
      m.at(r, c) = best;
    }
  return m;
}

// A token belongs to the foreground class covering the largest fraction of
// its cell box, provided that fraction reaches the threshold; ties go to the
// lower class index, anything below threshold is background.
inline int assign_token_class(const TokenBox& token, const LabelMask& mask, const RGBImage& image,
                              const GridSpec& spec, double threshold = 0.5) {
  const CellBox cb = scale_box(token, image, spec);
  const int total = (cb.row_end - cb.row_start) * (cb.col_end - cb.col_start);
  std::vector<int> counts;
  for (int r = cb.row_start; r < cb.row_end; ++r)
    for (int c = cb.col_start; c < cb.col_end; ++c) {
      const int cls = mask.at(r, c);
      if (cls >= static_cast<int>(counts.size())) counts.resize(static_cast<std::size_t>(cls) + 1, 0);
      ++counts[static_cast<std::size_t>(cls)];
    }
  int best = 0, best_count = 0;
  for (std::size_t cls = 1; cls < counts.size(); ++cls)
    if (counts[cls] > best_count) {
      best_count = counts[cls];
      best = static_cast<int>(cls);
    }
  return best > 0 && static_cast<double>(best_count) / total >= threshold ? best : 0;
}

inline FieldPrediction decode_fields_from_mask(const Document& doc, const LabelMask& mask,
                                               const GridSpec& spec, const FieldSchema& schema,
                                               double threshold = 0.5) {
  FieldPrediction pred;
  for (const auto& name : schema.field_names) pred.fields[name] = {};
  for (const TokenBox& tok : doc.tokens) {
    const int cls = assign_token_class(tok, mask, doc.image, spec, threshold);
    if (cls > 0) pred.fields[schema.name_of(cls)].tokens.push_back(tok.index);
  }
  for (auto& [name, field] : pred.fields) {
    // tokens arrive in reading order already; keep the join explicit
    std::sort(field.tokens.begin(), field.tokens.end());
    std::string joined;
    for (int idx : field.tokens) {
      if (!joined.empty()) joined += ' ';
      joined += normalize_token(doc.tokens[static_cast<std::size_t>(idx)].text);
    }
    field.text = std::move(joined);
  }
  return pred;
}

// Inference decoding: argmax the probability map, then collect each field's
// tokens in their original document order.
template <typename T>
FieldPrediction decode_fields(const Document& doc, const TensorT<T>& probs, const GridSpec& spec,
                              const FieldSchema& schema, double threshold = 0.5) {
  return decode_fields_from_mask(doc, argmax_mask(probs), spec, schema, threshold);
}

}  // namespace vwg
