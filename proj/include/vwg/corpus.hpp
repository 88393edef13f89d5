#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vwg/embed.hpp"
#include "vwg/error.hpp"
#include "vwg/rng.hpp"

namespace vwg {

// One OCR word with its bounding box in source-image pixels. `index` is the
// ordinal position in OCR reading order.
struct TokenBox {
  int index = 0;
  std::string text;
  int x = 0, y = 0, w = 0, h = 0;
};

struct RGBImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB triples

  RGBImage() = default;
  RGBImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 255) {}

  std::uint8_t* px(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* px(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

struct Document {
  std::string id;
  RGBImage image;
  std::vector<TokenBox> tokens;
};

// Ordered field names; field i maps to class index i+1, class 0 is background.
struct FieldSchema {
  std::vector<std::string> field_names;

  int num_fields() const { return static_cast<int>(field_names.size()); }
  int num_classes() const { return num_fields() + 1; }

  int class_of(const std::string& name) const {
    for (int i = 0; i < num_fields(); ++i)
      if (field_names[i] == name) return i + 1;
    throw UnknownField("field not in schema: " + name);
  }

  const std::string& name_of(int cls) const { return field_names.at(static_cast<std::size_t>(cls) - 1); }

  bool operator==(const FieldSchema&) const = default;
};

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
};

// Field name -> annotated regions. An empty region list means the field is
// absent from the page.
struct Annotation {
  std::map<std::string, std::vector<Rect>> regions;
};

struct LabeledDocument {
  Document document;
  Annotation annotation;
  std::vector<int> gt_assignment;  // token index -> class index, 0..K
};

struct Dataset {
  FieldSchema schema;
  std::vector<LabeledDocument> docs;
};

// ---------------------------------------------------------------------------
// PPM (P6) image files
// ---------------------------------------------------------------------------

namespace detail {

inline int ppm_next_int(std::istream& is, const std::string& path) {
  // skip whitespace and '#' comments
  for (;;) {
    const int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      is.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(is >> value)) throw MalformedFile("bad PPM header: " + path);
  return value;
}

}  // namespace detail

inline void write_ppm(const std::string& path, const RGBImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoFailure("cannot open for write: " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw IoFailure("short write: " + path);
}

inline RGBImage read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoFailure("cannot open for read: " + path);
  char magic[2];
  is.read(magic, 2);
  if (!is || magic[0] != 'P' || magic[1] != '6') throw BadMagic("not a P6 PPM: " + path);
  const int width = detail::ppm_next_int(is, path);
  const int height = detail::ppm_next_int(is, path);
  const int maxval = detail::ppm_next_int(is, path);
  if (width < 1 || height < 1) throw MalformedFile("bad PPM dimensions: " + path);
  if (maxval != 255) throw MalformedFile("only 8-bit PPM supported: " + path);
  is.get();  // single whitespace after maxval
  RGBImage img(width, height);
  is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!is) throw IoFailure("truncated PPM payload: " + path);
  return img;
}

// ---------------------------------------------------------------------------
// OCR / annotation JSON
// ---------------------------------------------------------------------------

namespace detail {

inline int require_int(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw MalformedFile(where + ": missing integer field '" + key + "'");
  return j[key].get<int>();
}

inline void check_box_in_image(int x, int y, int w, int h, int img_w, int img_h, const std::string& what) {
  if (w < 1 || h < 1 || x < 0 || y < 0 || x + w > img_w || y + h > img_h)
    throw BoxOutOfBounds(what + ": box (" + std::to_string(x) + "," + std::to_string(y) + "," +
                         std::to_string(w) + "," + std::to_string(h) + ") outside " + std::to_string(img_w) +
                         "x" + std::to_string(img_h) + " image");
}

}  // namespace detail

inline std::vector<TokenBox> parse_ocr_json(const nlohmann::json& j, int img_w, int img_h,
                                            const std::string& where) {
  const int w = detail::require_int(j, "width", where);
  const int h = detail::require_int(j, "height", where);
  if (w != img_w || h != img_h)
    throw MalformedFile(where + ": OCR dimensions " + std::to_string(w) + "x" + std::to_string(h) +
                        " do not match image " + std::to_string(img_w) + "x" + std::to_string(img_h));
  if (!j.contains("tokens") || !j["tokens"].is_array()) throw MalformedFile(where + ": missing 'tokens' array");
  std::vector<TokenBox> out;
  int index = 0;
  for (const auto& t : j["tokens"]) {
    TokenBox tb;
    tb.index = index;
    if (!t.contains("text") || !t["text"].is_string())
      throw MalformedFile(where + ": token " + std::to_string(index) + " missing 'text'");
    tb.text = t["text"].get<std::string>();
    if (normalize_token(tb.text).empty())
      throw MalformedFile(where + ": token " + std::to_string(index) + " empty after normalization");
    const std::string tok_where = where + ": token " + std::to_string(index);
    tb.x = detail::require_int(t, "x", tok_where);
    tb.y = detail::require_int(t, "y", tok_where);
    tb.w = detail::require_int(t, "w", tok_where);
    tb.h = detail::require_int(t, "h", tok_where);
    detail::check_box_in_image(tb.x, tb.y, tb.w, tb.h, img_w, img_h, tok_where);
    out.push_back(std::move(tb));
    ++index;
  }
  return out;
}

inline Annotation parse_annotation_json(const nlohmann::json& j, const FieldSchema& schema, int img_w,
                                        int img_h, const std::string& where) {
  if (!j.contains("fields") || !j["fields"].is_object()) throw MalformedFile(where + ": missing 'fields' object");
  Annotation ann;
  for (const auto& name : schema.field_names) ann.regions[name] = {};
  for (const auto& [name, rects] : j["fields"].items()) {
    if (std::find(schema.field_names.begin(), schema.field_names.end(), name) == schema.field_names.end())
      throw UnknownField(where + ": field not in schema: " + name);
    if (!rects.is_array()) throw MalformedFile(where + ": field '" + name + "' must hold an array");
    for (const auto& r : rects) {
      Rect rect;
      const std::string r_where = where + ": field '" + name + "'";
      rect.x = detail::require_int(r, "x", r_where);
      rect.y = detail::require_int(r, "y", r_where);
      rect.w = detail::require_int(r, "w", r_where);
      rect.h = detail::require_int(r, "h", r_where);
      detail::check_box_in_image(rect.x, rect.y, rect.w, rect.h, img_w, img_h, r_where);
      ann.regions[name].push_back(rect);
    }
  }
  return ann;
}

inline nlohmann::json ocr_to_json(const Document& doc) {
  nlohmann::json j;
  j["width"] = doc.image.width;
  j["height"] = doc.image.height;
  j["tokens"] = nlohmann::json::array();
  for (const auto& t : doc.tokens)
    j["tokens"].push_back({{"text", t.text}, {"x", t.x}, {"y", t.y}, {"w", t.w}, {"h", t.h}});
  return j;
}

inline nlohmann::json annotation_to_json(const Annotation& ann) {
  nlohmann::json fields = nlohmann::json::object();
  for (const auto& [name, rects] : ann.regions) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rects) arr.push_back({{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}});
    fields[name] = std::move(arr);
  }
  return nlohmann::json{{"fields", std::move(fields)}};
}

// ---------------------------------------------------------------------------
// Ground truth derivation
// ---------------------------------------------------------------------------

namespace detail {

// Exact area of (token box ∩ union of rects), by x-slab sweep with y-interval
// merging. All integer arithmetic.
inline std::int64_t overlap_with_union(const TokenBox& t, const std::vector<Rect>& rects) {
  std::vector<Rect> clipped;
  std::vector<std::int64_t> xs;
  for (const Rect& r : rects) {
    const int x0 = std::max(t.x, r.x), x1 = std::min(t.x + t.w, r.x + r.w);
    const int y0 = std::max(t.y, r.y), y1 = std::min(t.y + t.h, r.y + r.h);
    if (x0 < x1 && y0 < y1) {
      clipped.push_back({x0, y0, x1 - x0, y1 - y0});
      xs.push_back(x0);
      xs.push_back(x1);
    }
  }
  if (clipped.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::int64_t area = 0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const std::int64_t slab_w = xs[i + 1] - xs[i];
    std::vector<std::pair<int, int>> ys;
    for (const Rect& r : clipped)
      if (r.x <= xs[i] && xs[i + 1] <= r.x + r.w) ys.emplace_back(r.y, r.y + r.h);
    std::sort(ys.begin(), ys.end());
    std::int64_t covered = 0;
    int cur_lo = 0, cur_hi = -1;
    bool open = false;
    for (const auto& [lo, hi] : ys) {
      if (!open || lo > cur_hi) {
        if (open) covered += cur_hi - cur_lo;
        cur_lo = lo;
        cur_hi = hi;
        open = true;
      } else {
        cur_hi = std::max(cur_hi, hi);
      }
    }
    if (open) covered += cur_hi - cur_lo;
    area += slab_w * covered;
  }
  return area;
}

}  // namespace detail

// Assigns each token the class whose regions cover at least half of the token
// box area; when several classes reach the threshold the larger overlap wins,
// ties break toward the lower class index. Everything else is background.
inline std::vector<int> derive_ground_truth(const Document& doc, const Annotation& ann,
                                            const FieldSchema& schema) {
  std::vector<int> out(doc.tokens.size(), 0);
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    const TokenBox& t = doc.tokens[i];
    const std::int64_t area = static_cast<std::int64_t>(t.w) * t.h;
    int best_class = 0;
    std::int64_t best_overlap = -1;
    for (int c = 1; c <= schema.num_fields(); ++c) {
      const auto it = ann.regions.find(schema.name_of(c));
      if (it == ann.regions.end()) continue;
      const std::int64_t ov = detail::overlap_with_union(t, it->second);
      if (2 * ov >= area && ov > best_overlap) {
        best_overlap = ov;
        best_class = c;
      }
    }
    out[i] = best_class;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoFailure("cannot open: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFile(path + ": " + e.what());
  }
  return j;
}

inline LabeledDocument load_document(const std::string& ocr_path, const std::string& image_path,
                                     const std::optional<std::string>& annotation_path,
                                     const FieldSchema& schema, const std::string& id = "") {
  LabeledDocument ldoc;
  ldoc.document.id = id.empty() ? std::filesystem::path(image_path).stem().string() : id;
  ldoc.document.image = read_ppm(image_path);
  ldoc.document.tokens = parse_ocr_json(load_json_file(ocr_path), ldoc.document.image.width,
                                        ldoc.document.image.height, ocr_path);
  if (annotation_path) {
    ldoc.annotation = parse_annotation_json(load_json_file(*annotation_path), schema,
                                            ldoc.document.image.width, ldoc.document.image.height,
                                            *annotation_path);
  } else {
    for (const auto& name : schema.field_names) ldoc.annotation.regions[name] = {};
  }
  ldoc.gt_assignment = derive_ground_truth(ldoc.document, ldoc.annotation, schema);
  return ldoc;
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string ocr;
  std::string image;
  std::optional<std::string> annotation;
};

struct DatasetManifest {
  FieldSchema schema;
  std::vector<ManifestEntry> docs;
};

inline DatasetManifest read_manifest(const std::string& path) {
  const nlohmann::json j = load_json_file(path);
  DatasetManifest m;
  if (!j.contains("schema") || !j["schema"].contains("fields") || !j["schema"]["fields"].is_array())
    throw MalformedFile(path + ": missing schema.fields");
  for (const auto& f : j["schema"]["fields"]) m.schema.field_names.push_back(f.get<std::string>());
  if (!j.contains("docs") || !j["docs"].is_array()) throw MalformedFile(path + ": missing docs array");
  for (const auto& d : j["docs"]) {
    ManifestEntry e;
    e.id = d.at("id").get<std::string>();
    e.ocr = d.at("ocr").get<std::string>();
    e.image = d.at("image").get<std::string>();
    if (d.contains("annotation") && !d["annotation"].is_null())
      e.annotation = d["annotation"].get<std::string>();
    m.docs.push_back(std::move(e));
  }
  return m;
}

inline void write_manifest(const std::string& path, const DatasetManifest& m) {
  nlohmann::json j;
  j["schema"]["fields"] = m.schema.field_names;
  j["docs"] = nlohmann::json::array();
  for (const auto& e : m.docs) {
    nlohmann::json d{{"id", e.id}, {"ocr", e.ocr}, {"image", e.image}};
    if (e.annotation)
      d["annotation"] = *e.annotation;
    else
      d["annotation"] = nullptr;
    j["docs"].push_back(std::move(d));
  }
  std::ofstream os(path);
  if (!os) throw IoFailure("cannot open for write: " + path);
  os << j.dump(2) << "\n";
}

// Loads every document listed in a manifest; relative paths resolve against
// the manifest's directory.
inline Dataset load_dataset(const std::string& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  Dataset ds;
  ds.schema = m.schema;
  for (const auto& e : m.docs) {
    std::optional<std::string> ann;
    if (e.annotation) ann = resolve(*e.annotation);
    ds.docs.push_back(load_document(resolve(e.ocr), resolve(e.image), ann, m.schema, e.id));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// k-fold splits
// ---------------------------------------------------------------------------

struct FoldSplit {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
};

// Shuffles the dataset once, cuts it into k near-equal chunks, and for fold f
// holds chunk f out, splitting it as evenly as possible into validation and
// test (validation takes the odd element). Held-out chunks are disjoint and
// together cover the dataset exactly once.
inline std::vector<FoldSplit> split_kfold(int num_docs, int k, std::uint64_t seed) {
  if (k < 2) throw DatasetTooSmall("k must be >= 2");
  if (num_docs < 2 * k)
    throw DatasetTooSmall("need at least " + std::to_string(2 * k) + " docs for k=" + std::to_string(k) +
                          ", got " + std::to_string(num_docs));
  std::vector<int> order(static_cast<std::size_t>(num_docs));
  for (int i = 0; i < num_docs; ++i) order[static_cast<std::size_t>(i)] = i;
  Xoshiro256 rng(seed);
  for (int i = num_docs - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(i) + 1))]);

  std::vector<std::vector<int>> chunks(static_cast<std::size_t>(k));
  const int base = num_docs / k, extra = num_docs % k;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    for (int i = 0; i < size; ++i) chunks[static_cast<std::size_t>(f)].push_back(order[pos++]);
  }

  std::vector<FoldSplit> folds;
  for (int f = 0; f < k; ++f) {
    FoldSplit fs;
    const auto& held = chunks[static_cast<std::size_t>(f)];
    const std::size_t val_n = held.size() - held.size() / 2;
    fs.validation.assign(held.begin(), held.begin() + static_cast<std::ptrdiff_t>(val_n));
    fs.test.assign(held.begin() + static_cast<std::ptrdiff_t>(val_n), held.end());
    for (int g = 0; g < k; ++g)
      if (g != f)
        fs.train.insert(fs.train.end(), chunks[static_cast<std::size_t>(g)].begin(),
                        chunks[static_cast<std::size_t>(g)].end());
    std::sort(fs.train.begin(), fs.train.end());
    std::sort(fs.validation.begin(), fs.validation.end());
    std::sort(fs.test.begin(), fs.test.end());
    folds.push_back(std::move(fs));
  }
  return folds;
}

inline std::vector<FoldSplit> split_kfold(const Dataset& ds, int k, std::uint64_t seed) {
  return split_kfold(static_cast<int>(ds.docs.size()), k, seed);
}

}  // namespace vwg
