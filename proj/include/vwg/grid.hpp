#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vwg/corpus.hpp"
#include "vwg/embed.hpp"
#include "vwg/error.hpp"
#include "vwg/tensor.hpp"

namespace vwg {

struct GridSpec {
  int rows = 256;   // H
  int cols = 192;   // W
  int dim = 32;     // embedding channels d
};

// Half-open grid-cell ranges covered by a scaled source-pixel box.
struct CellBox {
  int row_start = 0, row_end = 0;
  int col_start = 0, col_end = 0;
};

// Scales a source-pixel rectangle to grid cells. Floor/ceil endpoints with a
// 1-cell minimum so thin tokens never vanish.
inline CellBox scale_box(int x, int y, int w, int h, int image_w, int image_h, const GridSpec& spec) {
  auto lo = [](std::int64_t v, std::int64_t extent, std::int64_t cells) {
    return static_cast<int>(v * cells / extent);
  };
  auto hi = [](std::int64_t v, std::int64_t extent, std::int64_t cells) {
    return static_cast<int>((v * cells + extent - 1) / extent);
  };
  CellBox cb;
  cb.col_start = lo(x, image_w, spec.cols);
  cb.col_end = std::max(cb.col_start + 1, hi(x + w, image_w, spec.cols));
  cb.row_start = lo(y, image_h, spec.rows);
  cb.row_end = std::max(cb.row_start + 1, hi(y + h, image_h, spec.rows));
  cb.col_end = std::min(cb.col_end, spec.cols);
  cb.row_end = std::min(cb.row_end, spec.rows);
  return cb;
}

inline CellBox scale_box(const TokenBox& t, const RGBImage& img, const GridSpec& spec) {
  return scale_box(t.x, t.y, t.w, t.h, img.width, img.height, spec);
}

// Layout-only encoding: (1,1,1) on cells covered by any token box, else zeros.
inline Tensor rasterize_layout(const Document& doc, const GridSpec& spec) {
  Tensor t(spec.rows, spec.cols, 3);
  for (const TokenBox& tok : doc.tokens) {
    const CellBox cb = scale_box(tok, doc.image, spec);
    for (int r = cb.row_start; r < cb.row_end; ++r)
      for (int c = cb.col_start; c < cb.col_end; ++c) {
        float* cell = t.cell(r, c);
        cell[0] = cell[1] = cell[2] = 1.0f;
      }
  }
  return t;
}

// WordGrid encoding: covered cells carry the token's embedding, the rest stay
// zero. Tokens are painted in reading order, so on overlap the later token
// wins.
inline Tensor rasterize_wordgrid(const Document& doc, const GridSpec& spec, const Embedder& embedder) {
  if (embedder.dim != spec.dim) throw ShapeMismatch("embedder dim != grid spec dim");
  Tensor t(spec.rows, spec.cols, spec.dim);
  for (const TokenBox& tok : doc.tokens) {
    const std::vector<float> e = embed_token(embedder, tok.text);
    const CellBox cb = scale_box(tok, doc.image, spec);
    for (int r = cb.row_start; r < cb.row_end; ++r)
      for (int c = cb.col_start; c < cb.col_end; ++c)
        std::copy(e.begin(), e.end(), t.cell(r, c));
  }
  return t;
}

// Nearest-neighbor resize, sampling each output cell's center, scaled to [0,1].
inline Tensor resize_image(const RGBImage& img, int rows, int cols) {
  Tensor t(rows, cols, 3);
  for (int r = 0; r < rows; ++r) {
    const int sy = static_cast<int>((2LL * r + 1) * img.height / (2LL * rows));
    for (int c = 0; c < cols; ++c) {
      const int sx = static_cast<int>((2LL * c + 1) * img.width / (2LL * cols));
      const std::uint8_t* p = img.px(sx, sy);
      float* cell = t.cell(r, c);
      cell[0] = static_cast<float>(p[0]) / 255.0f;
      cell[1] = static_cast<float>(p[1]) / 255.0f;
      cell[2] = static_cast<float>(p[2]) / 255.0f;
    }
  }
  return t;
}

// VisualWordGrid-pad encoding (H, W, d+3): covered cells are (embedding, 0,0,0),
// uncovered cells are (0_d, R,G,B) from the resized image. Embedding and RGB
// channels are mutually exclusive per cell.
inline Tensor rasterize_vwg_pad(const Document& doc, const GridSpec& spec, const Embedder& embedder) {
  if (embedder.dim != spec.dim) throw ShapeMismatch("embedder dim != grid spec dim");
  if (doc.image.width < 1 || doc.image.height < 1) throw MissingImage("document has no image: " + doc.id);
  const int d = spec.dim;
  Tensor t(spec.rows, spec.cols, d + 3);
  const Tensor rgb = resize_image(doc.image, spec.rows, spec.cols);
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      const float* src = rgb.cell(r, c);
      float* cell = t.cell(r, c);
      cell[d + 0] = src[0];
      cell[d + 1] = src[1];
      cell[d + 2] = src[2];
    }
  for (const TokenBox& tok : doc.tokens) {
    const std::vector<float> e = embed_token(embedder, tok.text);
    const CellBox cb = scale_box(tok, doc.image, spec);
    for (int r = cb.row_start; r < cb.row_end; ++r)
      for (int c = cb.col_start; c < cb.col_end; ++c) {
        float* cell = t.cell(r, c);
        std::copy(e.begin(), e.end(), cell);
        cell[d + 0] = cell[d + 1] = cell[d + 2] = 0.0f;
      }
  }
  return t;
}

// Two-encoder inputs: the WordGrid tensor plus the full resized image (RGB
// kept everywhere).
inline std::pair<Tensor, Tensor> make_two_encoder_inputs(const Document& doc, const GridSpec& spec,
                                                         const Embedder& embedder) {
  if (doc.image.width < 1 || doc.image.height < 1) throw MissingImage("document has no image: " + doc.id);
  return {rasterize_wordgrid(doc, spec, embedder), resize_image(doc.image, spec.rows, spec.cols)};
}

enum class EncoderKind { layout, wordgrid, vwg_pad, vwg_2enc };

inline const char* encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::layout: return "layout";
    case EncoderKind::wordgrid: return "wordgrid";
    case EncoderKind::vwg_pad: return "vwg-pad";
    case EncoderKind::vwg_2enc: return "vwg-2enc";
  }
  return "?";
}

inline EncoderKind parse_encoder_kind(const std::string& name) {
  if (name == "layout") return EncoderKind::layout;
  if (name == "wordgrid") return EncoderKind::wordgrid;
  if (name == "vwg-pad") return EncoderKind::vwg_pad;
  if (name == "vwg-2enc") return EncoderKind::vwg_2enc;
  throw Error("unknown encoder kind: " + name);
}

// Main-input channel count for each encoding given embedding dim d.
inline int encoder_main_channels(EncoderKind k, int d) {
  switch (k) {
    case EncoderKind::layout: return 3;
    case EncoderKind::wordgrid: return d;
    case EncoderKind::vwg_pad: return d + 3;
    case EncoderKind::vwg_2enc: return d;
  }
  return 0;
}

struct EncodedInput {
  Tensor main;
  std::optional<Tensor> aux;
};

inline EncodedInput encode_document(const Document& doc, EncoderKind kind, const GridSpec& spec,
                                    const Embedder& embedder) {
  switch (kind) {
    case EncoderKind::layout: return {rasterize_layout(doc, spec), std::nullopt};
    case EncoderKind::wordgrid: return {rasterize_wordgrid(doc, spec, embedder), std::nullopt};
    case EncoderKind::vwg_pad: return {rasterize_vwg_pad(doc, spec, embedder), std::nullopt};
    case EncoderKind::vwg_2enc: {
      auto [wg, img] = make_two_encoder_inputs(doc, spec, embedder);
      return {std::move(wg), std::move(img)};
    }
  }
  throw Error("unknown encoder kind");
}

// Ground-truth mask: every token paints its class over its cell box in
// reading order (the same later-token-wins rule the input encodings use).
inline LabelMask rasterize_target_mask(const LabeledDocument& ldoc, const GridSpec& spec) {
  LabelMask m(spec.rows, spec.cols);
  for (std::size_t i = 0; i < ldoc.document.tokens.size(); ++i) {
    const TokenBox& tok = ldoc.document.tokens[i];
    const CellBox cb = scale_box(tok, ldoc.document.image, spec);
    const std::int32_t cls = ldoc.gt_assignment[i];
    for (int r = cb.row_start; r < cb.row_end; ++r)
      for (int c = cb.col_start; c < cb.col_end; ++c) m.at(r, c) = cls;
  }
  return m;
}

}  // namespace vwg
