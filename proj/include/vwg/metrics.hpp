#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vwg/corpus.hpp"
#include "vwg/error.hpp"
#include "vwg/extract.hpp"
#include "vwg/tensor.hpp"

namespace vwg {

struct EditCounts {
  int insertions = 0;
  int deletions = 0;
  int substitutions = 0;

  int total() const { return insertions + deletions + substitutions; }
  bool operator==(const EditCounts&) const = default;
};

// Minimal token-level edit distance transforming `gt` into `pred`, unit
// costs. The traceback prefers the diagonal, so among minimal alignments a
// substitution is reported rather than an insert+delete pair.
inline EditCounts token_edit_distance(const std::vector<std::string>& gt,
                                      const std::vector<std::string>& pred) {
  const std::size_t n = gt.size(), m = pred.size();
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = dp[i - 1][j - 1] + (gt[i - 1] == pred[j - 1] ? 0 : 1);
      dp[i][j] = std::min({sub, dp[i - 1][j] + 1, dp[i][j - 1] + 1});
    }
  EditCounts counts;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + (gt[i - 1] == pred[j - 1] ? 0 : 1)) {
      if (gt[i - 1] != pred[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

// Per-field word accuracy: 1 - edits / |gt tokens|, unclamped (gross
// over-prediction goes negative). Fields with empty ground truth are skipped;
// the document WAR averages the evaluated fields.
struct WarResult {
  std::map<std::string, double> per_field;  // evaluated fields only
  double mean = 0.0;
};

inline WarResult war(const std::map<std::string, std::vector<std::string>>& gt_fields,
                     const std::map<std::string, std::vector<std::string>>& pred_fields) {
  WarResult out;
  double sum = 0.0;
  for (const auto& [name, gt] : gt_fields) {
    if (gt.empty()) continue;
    static const std::vector<std::string> kEmpty;
    const auto it = pred_fields.find(name);
    const auto& pred = it == pred_fields.end() ? kEmpty : it->second;
    const EditCounts ec = token_edit_distance(gt, pred);
    const double field_war = 1.0 - static_cast<double>(ec.total()) / static_cast<double>(gt.size());
    out.per_field[name] = field_war;
    sum += field_war;
  }
  if (out.per_field.empty()) throw NoEvaluableFields("all ground-truth fields are empty");
  out.mean = sum / static_cast<double>(out.per_field.size());
  return out;
}

// Fraction of schema fields whose joined strings match exactly; an empty
// ground-truth field matches only an empty prediction.
inline double far_score(const std::map<std::string, std::vector<std::string>>& gt_fields,
                        const std::map<std::string, std::vector<std::string>>& pred_fields,
                        const FieldSchema& schema) {
  int matches = 0;
  auto join = [](const std::vector<std::string>& toks) {
    std::string s;
    for (const auto& t : toks) {
      if (!s.empty()) s += ' ';
      s += t;
    }
    return s;
  };
  for (const auto& name : schema.field_names) {
    static const std::vector<std::string> kEmpty;
    const auto g = gt_fields.find(name);
    const auto p = pred_fields.find(name);
    const auto& gt = g == gt_fields.end() ? kEmpty : g->second;
    const auto& pred = p == pred_fields.end() ? kEmpty : p->second;
    if (join(gt) == join(pred)) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(schema.num_fields());
}

// Mean IoU over foreground classes present in either mask; classes absent
// from both are skipped, and a pair of empty masks scores 1.
inline double iou_metric(const LabelMask& pred, const LabelMask& gt, const FieldSchema& schema) {
  if (pred.rows != gt.rows || pred.cols != gt.cols) throw ShapeMismatch("mask shapes differ");
  const int K = schema.num_fields();
  std::vector<std::int64_t> inter(static_cast<std::size_t>(K) + 1, 0),
      uni(static_cast<std::size_t>(K) + 1, 0);
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    const int p = pred.v[i], g = gt.v[i];
    if (p == g && p > 0) ++inter[static_cast<std::size_t>(p)];
    if (p > 0) ++uni[static_cast<std::size_t>(p)];
    if (g > 0 && g != p) ++uni[static_cast<std::size_t>(g)];
  }
  double sum = 0.0;
  int included = 0;
  for (int c = 1; c <= K; ++c) {
    if (uni[static_cast<std::size_t>(c)] == 0) continue;
    sum += static_cast<double>(inter[static_cast<std::size_t>(c)]) /
           static_cast<double>(uni[static_cast<std::size_t>(c)]);
    ++included;
  }
  return included == 0 ? 1.0 : sum / included;
}

// ---------------------------------------------------------------------------
// Dataset-level evaluation
// ---------------------------------------------------------------------------

struct DocScores {
  std::string id;
  std::map<std::string, double> per_field_war;
  double war = 0.0;
  double far = 0.0;
  int fields_evaluated = 0;
};

struct Report {
  double dataset_war = 0.0;
  double dataset_far = 0.0;
  struct FieldAggregate {
    double war = 0.0;   // mean over docs where the field has ground truth
    double far = 0.0;   // exact-match rate over all docs
    int docs = 0;       // docs with nonempty ground truth
  };
  std::map<std::string, FieldAggregate> per_field;
  std::vector<DocScores> per_doc;
};

// Ground-truth token sequences per field, in reading order, normalized.
inline std::map<std::string, std::vector<std::string>> gt_field_tokens(const LabeledDocument& ldoc,
                                                                       const FieldSchema& schema) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& name : schema.field_names) out[name] = {};
  for (std::size_t i = 0; i < ldoc.document.tokens.size(); ++i) {
    const int cls = ldoc.gt_assignment[i];
    if (cls > 0) out[schema.name_of(cls)].push_back(normalize_token(ldoc.document.tokens[i].text));
  }
  return out;
}

inline std::map<std::string, std::vector<std::string>> prediction_field_tokens(
    const Document& doc, const FieldPrediction& pred) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [name, field] : pred.fields) {
    auto& toks = out[name];
    for (int idx : field.tokens) toks.push_back(normalize_token(doc.tokens[static_cast<std::size_t>(idx)].text));
  }
  return out;
}

inline DocScores score_document(const LabeledDocument& ldoc, const FieldPrediction& pred,
                                const FieldSchema& schema) {
  DocScores s;
  s.id = ldoc.document.id;
  const auto gt = gt_field_tokens(ldoc, schema);
  const auto pr = prediction_field_tokens(ldoc.document, pred);
  const WarResult w = war(gt, pr);
  s.per_field_war = w.per_field;
  s.war = w.mean;
  s.far = far_score(gt, pr, schema);
  s.fields_evaluated = static_cast<int>(w.per_field.size());
  return s;
}

inline Report evaluate_dataset(const Dataset& ds, const std::vector<int>& doc_indices,
                               const std::map<std::string, FieldPrediction>& predictions) {
  if (predictions.empty() || doc_indices.empty()) throw MissingPrediction("no predictions to evaluate");
  Report rep;
  for (const auto& name : ds.schema.field_names) rep.per_field[name] = {};
  std::map<std::string, int> field_matches;
  for (int idx : doc_indices) {
    const LabeledDocument& ldoc = ds.docs[static_cast<std::size_t>(idx)];
    const auto it = predictions.find(ldoc.document.id);
    if (it == predictions.end()) throw MissingPrediction("no prediction for document " + ldoc.document.id);
    DocScores s = score_document(ldoc, it->second, ds.schema);
    rep.dataset_war += s.war;
    rep.dataset_far += s.far;
    const auto gt = gt_field_tokens(ldoc, ds.schema);
    const auto pr = prediction_field_tokens(ldoc.document, it->second);
    for (const auto& [name, field_war] : s.per_field_war) {
      rep.per_field[name].war += field_war;
      rep.per_field[name].docs += 1;
    }
    for (const auto& name : ds.schema.field_names) {
      auto join = [](const std::vector<std::string>& toks) {
        std::string j;
        for (const auto& t : toks) {
          if (!j.empty()) j += ' ';
          j += t;
        }
        return j;
      };
      if (join(gt.at(name)) == join(pr.count(name) ? pr.at(name) : std::vector<std::string>{}))
        field_matches[name] += 1;
    }
    rep.per_doc.push_back(std::move(s));
  }
  const double n = static_cast<double>(rep.per_doc.size());
  rep.dataset_war /= n;
  rep.dataset_far /= n;
  for (auto& [name, agg] : rep.per_field) {
    if (agg.docs > 0) agg.war /= agg.docs;
    agg.far = field_matches[name] / n;
  }
  return rep;
}

inline nlohmann::json report_to_json(const Report& rep) {
  nlohmann::json j;
  j["dataset"] = {{"war", rep.dataset_war}, {"far", rep.dataset_far}};
  j["per_field"] = nlohmann::json::object();
  for (const auto& [name, agg] : rep.per_field)
    j["per_field"][name] = {{"war", agg.war}, {"far", agg.far}, {"docs", agg.docs}};
  j["per_doc"] = nlohmann::json::array();
  for (const auto& d : rep.per_doc)
    j["per_doc"].push_back({{"id", d.id}, {"war", d.war}, {"far", d.far}});
  return j;
}

inline Report report_from_json(const nlohmann::json& j) {
  Report rep;
  rep.dataset_war = j.at("dataset").at("war").get<double>();
  rep.dataset_far = j.at("dataset").at("far").get<double>();
  for (const auto& [name, agg] : j.at("per_field").items()) {
    Report::FieldAggregate fa;
    fa.war = agg.at("war").get<double>();
    fa.far = agg.at("far").get<double>();
    fa.docs = agg.at("docs").get<int>();
    rep.per_field[name] = fa;
  }
  for (const auto& d : j.at("per_doc")) {
    DocScores s;
    s.id = d.at("id").get<std::string>();
    s.war = d.at("war").get<double>();
    s.far = d.at("far").get<double>();
    rep.per_doc.push_back(std::move(s));
  }
  return rep;
}

}  // namespace vwg
