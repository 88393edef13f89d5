#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vwg/corpus.hpp"
#include "vwg/error.hpp"
#include "vwg/rng.hpp"

namespace vwg {

enum class SynthVariant { text_keyed, visual_keyed };

struct SynthConfig {
  int num_docs = 1;
  SynthVariant variant = SynthVariant::visual_keyed;
  int image_width = 512;
  int image_height = 512;
  std::uint64_t seed = 0;
  FieldSchema fields{{"receiver", "supplier", "invoice_info", "total"}};
};

namespace synthdetail {

// 3x5 pseudo-glyphs, one bit per pixel, rows top to bottom. Bit 2 of each row
// byte is the leftmost column, so the literals read like the glyph.
constexpr std::uint16_t make_glyph(int r0, int r1, int r2, int r3, int r4) {
  return static_cast<std::uint16_t>(r0 | (r1 << 3) | (r2 << 6) | (r3 << 9) | (r4 << 12));
}

inline std::uint16_t glyph_bits(char c) {
  switch (c) {
    case '0': return make_glyph(0b111, 0b101, 0b101, 0b101, 0b111);
    case '1': return make_glyph(0b010, 0b110, 0b010, 0b010, 0b111);
    case '2': return make_glyph(0b111, 0b001, 0b111, 0b100, 0b111);
    case '3': return make_glyph(0b111, 0b001, 0b111, 0b001, 0b111);
    case '4': return make_glyph(0b101, 0b101, 0b111, 0b001, 0b001);
    case '5': return make_glyph(0b111, 0b100, 0b111, 0b001, 0b111);
    case '6': return make_glyph(0b111, 0b100, 0b111, 0b101, 0b111);
    case '7': return make_glyph(0b111, 0b001, 0b001, 0b010, 0b010);
    case '8': return make_glyph(0b111, 0b101, 0b111, 0b101, 0b111);
    case '9': return make_glyph(0b111, 0b101, 0b111, 0b001, 0b111);
    case 'a': return make_glyph(0b111, 0b101, 0b111, 0b101, 0b101);
    case 'b': return make_glyph(0b110, 0b101, 0b110, 0b101, 0b110);
    case 'c': return make_glyph(0b111, 0b100, 0b100, 0b100, 0b111);
    case 'd': return make_glyph(0b110, 0b101, 0b101, 0b101, 0b110);
    case 'e': return make_glyph(0b111, 0b100, 0b111, 0b100, 0b111);
    case 'f': return make_glyph(0b111, 0b100, 0b111, 0b100, 0b100);
    case 'g': return make_glyph(0b111, 0b100, 0b101, 0b101, 0b111);
    case 'h': return make_glyph(0b101, 0b101, 0b111, 0b101, 0b101);
    case 'i': return make_glyph(0b111, 0b010, 0b010, 0b010, 0b111);
    case 'j': return make_glyph(0b001, 0b001, 0b001, 0b101, 0b111);
    case 'k': return make_glyph(0b101, 0b110, 0b100, 0b110, 0b101);
    case 'l': return make_glyph(0b100, 0b100, 0b100, 0b100, 0b111);
    case 'm': return make_glyph(0b101, 0b111, 0b101, 0b101, 0b101);
    case 'n': return make_glyph(0b111, 0b101, 0b101, 0b101, 0b101);
    case 'o': return make_glyph(0b111, 0b101, 0b101, 0b101, 0b111);
    case 'p': return make_glyph(0b111, 0b101, 0b111, 0b100, 0b100);
    case 'q': return make_glyph(0b111, 0b101, 0b101, 0b111, 0b001);
    case 'r': return make_glyph(0b111, 0b101, 0b110, 0b101, 0b101);
    case 's': return make_glyph(0b111, 0b100, 0b111, 0b001, 0b111);
    case 't': return make_glyph(0b111, 0b010, 0b010, 0b010, 0b010);
    case 'u': return make_glyph(0b101, 0b101, 0b101, 0b101, 0b111);
    case 'v': return make_glyph(0b101, 0b101, 0b101, 0b101, 0b010);
    case 'w': return make_glyph(0b101, 0b101, 0b101, 0b111, 0b101);
    case 'x': return make_glyph(0b101, 0b101, 0b010, 0b101, 0b101);
    case 'y': return make_glyph(0b101, 0b101, 0b010, 0b010, 0b010);
    case 'z': return make_glyph(0b111, 0b001, 0b010, 0b100, 0b111);
    case '.': return make_glyph(0b000, 0b000, 0b000, 0b000, 0b010);
    case '-': return make_glyph(0b000, 0b000, 0b111, 0b000, 0b000);
    case ':': return make_glyph(0b000, 0b010, 0b000, 0b010, 0b000);
    case '#': return make_glyph(0b101, 0b111, 0b101, 0b111, 0b101);
    case '/': return make_glyph(0b001, 0b001, 0b010, 0b100, 0b100);
    default:  return make_glyph(0b111, 0b111, 0b111, 0b111, 0b111);
  }
}

struct Painter {
  RGBImage& img;
  int scale;

  int token_width(const std::string& text) const {
    const int n = static_cast<int>(text.size());
    return n * 3 * scale + (n - 1) * scale;
  }
  int token_height() const { return 5 * scale; }

  void fill_rect(int x, int y, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int x0 = std::max(0, x), y0 = std::max(0, y);
    const int x1 = std::min(img.width, x + w), y1 = std::min(img.height, y + h);
    for (int py = y0; py < y1; ++py)
      for (int px = x0; px < x1; ++px) {
        std::uint8_t* p = img.px(px, py);
        p[0] = r;
        p[1] = g;
        p[2] = b;
      }
  }

  void draw_token(const std::string& text, int x, int y) {
    int cx = x;
    for (char c : text) {
      const std::uint16_t bits = glyph_bits(c);
      for (int gr = 0; gr < 5; ++gr)
        for (int gc = 0; gc < 3; ++gc)
          if ((bits >> (gr * 3)) & (1 << (2 - gc))) fill_rect(cx + gc * scale, y + gr * scale, scale, scale, 20, 20, 20);
      cx += 4 * scale;
    }
  }
};

struct PlacedToken {
  std::string text;
  int x, y, w, h;
  int field_class;  // 0 = background
};

// Field tints (pastel, clearly non-white) for the visual-keyed variant.
inline std::array<std::uint8_t, 3> field_tint(int field_index) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 6> tints{{
      {255, 190, 190}, {190, 255, 190}, {190, 205, 255}, {255, 245, 160}, {235, 180, 255}, {180, 245, 245}}};
  return tints[static_cast<std::size_t>(field_index) % tints.size()];
}

inline std::string two_digits(Xoshiro256& rng) {
  const int v = static_cast<int>(rng.next_below(100));
  return std::string(1, static_cast<char>('0' + v / 10)) + static_cast<char>('0' + v % 10);
}

// Draws a value/decoy token sequence for one field. All lexicon words are six
// characters long so box geometry carries no field identity.
inline std::vector<std::string> sample_value_tokens(Xoshiro256& rng, int field_index, int count) {
  static const std::array<std::array<const char*, 8>, 2> lists{{
      {"mr-ann", "mr-bob", "mr-eve", "mr-joe", "mr-kim", "mr-lee", "mr-max", "mr-zoe"},
      {"acm-co", "bix-co", "cor-co", "dex-co", "fab-co", "gol-co", "hux-co", "zen-co"}}};
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) {
    switch (field_index % 4) {
      case 0:
      case 1:
        out.push_back(lists[static_cast<std::size_t>(field_index % 4)][rng.next_below(8)]);
        break;
      case 2:
        out.push_back("inv-" + two_digits(rng));
        break;
      default: {
        const int whole = static_cast<int>(rng.next_below(900)) + 100;
        out.push_back(std::to_string(whole) + "." + two_digits(rng));
        break;
      }
    }
  }
  return out;
}

}  // namespace synthdetail

// Deterministic pseudo-invoice generator. Every document places each present
// field's value tokens at one side of a per-field row pair and an equal-length
// decoy sequence with the same text statistics at the other side; four layout
// templates rotate which field owns which row. In the visual-keyed variant the
// value sequence sits on a field-specific tinted rectangle (decoys stay on
// white); in the text-keyed variant a per-field keyword token sits above the
// value sequence instead.
inline Dataset synth_generate(const SynthConfig& config) {
  if (config.num_docs < 1) throw Error("num_docs must be >= 1");
  if (config.image_width < 64 || config.image_height < 64) throw Error("image dimensions must be >= 64");
  if (config.fields.num_fields() < 1) throw Error("schema needs at least one field");

  using namespace synthdetail;

  Dataset ds;
  ds.schema = config.fields;
  const int K = config.fields.num_fields();
  const int W = config.image_width, H = config.image_height;
  const int s = std::max(1, std::min(W, H) / 256);

  static const char* keywords[] = {"recip:", "suppl:", "invno:", "total:", "extra:", "misc.:"};
  static const char* fillers[] = {"page-1", "page-2", "doc-id", "copy-a", "ref-no", "memo-x"};

  for (int di = 0; di < config.num_docs; ++di) {
    Xoshiro256 rng(derive_seed(config.seed, static_cast<std::uint64_t>(di)));

    LabeledDocument ldoc;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "doc-%05d", di);
    ldoc.document.id = idbuf;
    ldoc.document.image = RGBImage(W, H);
    for (const auto& name : config.fields.field_names) ldoc.annotation.regions[name] = {};

    Painter paint{ldoc.document.image, s};
    std::vector<PlacedToken> placed;

    // header: "invoice" + random document number, always background
    {
      const int hx = W * 8 / 100 + static_cast<int>(rng.next_range(-2 * s, 2 * s));
      const int hy = H * 6 / 100 + static_cast<int>(rng.next_range(-2 * s, 2 * s));
      placed.push_back({"invoice", hx, hy, paint.token_width("invoice"), paint.token_height(), 0});
      std::string number = "#";
      for (int i = 0; i < 5; ++i) number += static_cast<char>('0' + rng.next_below(10));
      const int nx = hx + paint.token_width("invoice") + 6 * s;
      placed.push_back({number, nx, hy, paint.token_width(number), paint.token_height(), 0});
    }

    // one row pair per field slot; four cyclic templates decide which field
    // owns which row
    const int template_id = static_cast<int>(rng.next_below(4));
    const int left_x = W * 8 / 100;
    const int right_x = W * 56 / 100;
    const int token_gap = 5 * s;

    std::vector<bool> present(static_cast<std::size_t>(K));
    bool any = false;
    for (int f = 0; f < K; ++f) {
      present[static_cast<std::size_t>(f)] = rng.chance(0.9);
      any = any || present[static_cast<std::size_t>(f)];
    }
    if (!any) present[rng.next_below(static_cast<std::uint64_t>(K))] = true;

    for (int f = 0; f < K; ++f) {
      if (!present[static_cast<std::size_t>(f)]) continue;
      const int row = (f + template_id) % K;
      const int row_y = K == 1 ? H / 2 : H * (18 + row * 64 / (K - 1)) / 100;
      const bool value_left = rng.chance(0.75);

      const int jx = static_cast<int>(rng.next_range(-5 * s, 5 * s));
      const int jy = static_cast<int>(rng.next_range(-3 * s, 3 * s));

      int n_tokens = 1 + static_cast<int>(rng.next_below(3));
      std::vector<std::string> value = sample_value_tokens(rng, f, n_tokens);
      std::vector<std::string> decoy = sample_value_tokens(rng, f, n_tokens);

      auto seq_width = [&](const std::vector<std::string>& seq) {
        int w = 0;
        for (std::size_t i = 0; i < seq.size(); ++i) w += paint.token_width(seq[i]) + (i ? token_gap : 0);
        return w;
      };
      // shrink sequences that would collide with the other column or margin
      const int budget = right_x - left_x - 10 * s;
      while (value.size() > 1 && seq_width(value) > budget) value.pop_back();
      while (decoy.size() > value.size()) decoy.pop_back();

      const int vx = (value_left ? left_x : right_x) + jx;
      const int dx = (value_left ? right_x : left_x) + jx;
      const int y = row_y + jy;

      auto place_seq = [&](const std::vector<std::string>& seq, int x0, int cls) {
        int cx = x0;
        Rect bbox{0, 0, 0, 0};
        for (std::size_t i = 0; i < seq.size(); ++i) {
          const int tw = paint.token_width(seq[i]);
          placed.push_back({seq[i], cx, y, tw, paint.token_height(), cls});
          if (i == 0) bbox = {cx, y, tw, paint.token_height()};
          const int x_end = cx + tw;
          bbox.w = x_end - bbox.x;
          cx = x_end + token_gap;
        }
        return bbox;
      };

      const Rect vbox = place_seq(value, vx, f + 1);
      place_seq(decoy, dx, 0);
      ldoc.annotation.regions[config.fields.field_names[static_cast<std::size_t>(f)]].push_back(vbox);

      if (config.variant == SynthVariant::visual_keyed) {
        const auto tint = field_tint(f);
        const int m = 10 * s;
        paint.fill_rect(vbox.x - m, vbox.y - m, vbox.w + 2 * m, vbox.h + 2 * m, tint[0], tint[1], tint[2]);
      } else {
        const std::string kw = keywords[static_cast<std::size_t>(f) % 6];
        const int ky = std::max(1, y - 12 * s);
        placed.push_back({kw, vx, ky, paint.token_width(kw), paint.token_height(), 0});
      }
    }

    // background filler along the bottom
    const int n_filler = 2 + static_cast<int>(rng.next_below(3));
    for (int i = 0; i < n_filler; ++i) {
      const std::string word = fillers[rng.next_below(6)];
      const int fx = W * (8 + 22 * i) / 100 + static_cast<int>(rng.next_range(-3 * s, 3 * s));
      const int fy = H * 90 / 100 + static_cast<int>(rng.next_range(-2 * s, 2 * s));
      if (fx >= 0 && fx + paint.token_width(word) <= W - 2)
        placed.push_back({word, fx, fy, paint.token_width(word), paint.token_height(), 0});
    }

    // clamp all boxes into the image, then draw glyphs over any tint
    for (auto& p : placed) {
      p.x = std::max(0, std::min(p.x, W - p.w));
      p.y = std::max(0, std::min(p.y, H - p.h));
    }
    for (const auto& p : placed) paint.draw_token(p.text, p.x, p.y);

    // clamp annotation regions as well (token clamping is a no-op in practice)
    for (auto& [name, rects] : ldoc.annotation.regions)
      for (auto& r : rects) {
        r.x = std::max(0, std::min(r.x, W - r.w));
        r.y = std::max(0, std::min(r.y, H - r.h));
      }

    // reading order: sort by (y, x)
    std::stable_sort(placed.begin(), placed.end(), [](const PlacedToken& a, const PlacedToken& b) {
      return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    for (std::size_t i = 0; i < placed.size(); ++i) {
      TokenBox tb;
      tb.index = static_cast<int>(i);
      tb.text = placed[i].text;
      tb.x = placed[i].x;
      tb.y = placed[i].y;
      tb.w = placed[i].w;
      tb.h = placed[i].h;
      ldoc.document.tokens.push_back(std::move(tb));
    }

    ldoc.gt_assignment = derive_ground_truth(ldoc.document, ldoc.annotation, ds.schema);
    ds.docs.push_back(std::move(ldoc));
  }
  return ds;
}

// Writes image + OCR + annotation per document plus the dataset manifest.
// Output is byte-identical for identical configs.
inline void write_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  DatasetManifest manifest;
  manifest.schema = ds.schema;
  for (const auto& ldoc : ds.docs) {
    const std::string& id = ldoc.document.id;
    write_ppm((fs::path(dir) / (id + ".ppm")).string(), ldoc.document.image);
    std::ofstream ocr((fs::path(dir) / (id + ".ocr.json")).string());
    if (!ocr) throw IoFailure("cannot write OCR for " + id);
    ocr << ocr_to_json(ldoc.document).dump(2) << "\n";
    std::ofstream ann((fs::path(dir) / (id + ".ann.json")).string());
    if (!ann) throw IoFailure("cannot write annotation for " + id);
    ann << annotation_to_json(ldoc.annotation).dump(2) << "\n";
    manifest.docs.push_back({id, id + ".ocr.json", id + ".ppm", id + ".ann.json"});
  }
  write_manifest((fs::path(dir) / "manifest.json").string(), manifest);
}

}  // namespace vwg
