#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vwg/corpus.hpp"
#include "vwg/extract.hpp"
#include "vwg/grid.hpp"
#include "vwg/metrics.hpp"
#include "vwg/net.hpp"
#include "vwg/objective.hpp"
#include "vwg/parallel.hpp"

namespace vwg {

// Runs a checkpoint over the selected documents and decodes field predictions.
inline std::map<std::string, FieldPrediction> predict_documents(const Checkpoint& ck, const Dataset& ds,
                                                                const std::vector<int>& indices) {
  if (ds.schema.field_names != ck.schema.field_names)
    throw ShapeMismatch("dataset schema does not match checkpoint schema");
  std::vector<FieldPrediction> preds(indices.size());
  parallel_for(indices.size(), [&](std::size_t i) {
    const Document& doc = ds.docs[static_cast<std::size_t>(indices[i])].document;
    const EncodedInput input = encode_document(doc, ck.encoder_kind, ck.grid, ck.embedder);
    auto [probs, cache] = forward(ck.params, ck.arch, input.main,
                                  input.aux ? std::optional<Tensor>(*input.aux) : std::nullopt);
    preds[i] = decode_fields(doc, probs, ck.grid, ck.schema);
  });
  std::map<std::string, FieldPrediction> out;
  for (std::size_t i = 0; i < indices.size(); ++i)
    out[ds.docs[static_cast<std::size_t>(indices[i])].document.id] = std::move(preds[i]);
  return out;
}

inline nlohmann::json prediction_to_json(const std::string& id, const FieldPrediction& pred) {
  nlohmann::json fields = nlohmann::json::object();
  for (const auto& [name, field] : pred.fields)
    fields[name] = {{"tokens", field.tokens}, {"text", field.text}};
  return nlohmann::json{{"id", id}, {"fields", std::move(fields)}};
}

inline FieldPrediction prediction_from_json(const nlohmann::json& j) {
  FieldPrediction pred;
  for (const auto& [name, field] : j.at("fields").items()) {
    FieldPrediction::Field f;
    f.tokens = field.at("tokens").get<std::vector<int>>();
    f.text = field.at("text").get<std::string>();
    pred.fields[name] = std::move(f);
  }
  return pred;
}

struct FoldOutcome {
  Checkpoint checkpoint;
  std::vector<EpochStats> history;
  Report test_report;
};

// Trains on one split and scores the held-out test documents.
inline FoldOutcome run_fold(const Dataset& ds, const FoldSplit& split, const ArchConfig& arch,
                            const GridSpec& spec, const Embedder& embedder, const TrainConfig& cfg) {
  FoldOutcome out;
  TrainResult tr = train(ds, split.train, split.validation, arch, spec, embedder, cfg);
  out.checkpoint = std::move(tr.checkpoint);
  out.history = std::move(tr.history);
  const auto preds = predict_documents(out.checkpoint, ds, split.test);
  out.test_report = evaluate_dataset(ds, split.test, preds);
  return out;
}

// An 80/10/10 split for plain (non-k-fold) training runs; works down to very
// small datasets by holding out at least one validation and one test doc.
inline FoldSplit split_train_val_test(int num_docs, std::uint64_t seed) {
  if (num_docs < 3) throw DatasetTooSmall("need at least 3 docs for a train/val/test split");
  std::vector<int> order(static_cast<std::size_t>(num_docs));
  for (int i = 0; i < num_docs; ++i) order[static_cast<std::size_t>(i)] = i;
  Xoshiro256 rng(seed);
  for (int i = num_docs - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(i) + 1))]);
  const int hold = std::max(2, num_docs / 5);
  const int val_n = hold - hold / 2;
  FoldSplit fs;
  fs.validation.assign(order.begin(), order.begin() + val_n);
  fs.test.assign(order.begin() + val_n, order.begin() + hold);
  fs.train.assign(order.begin() + hold, order.end());
  std::sort(fs.train.begin(), fs.train.end());
  std::sort(fs.validation.begin(), fs.validation.end());
  std::sort(fs.test.begin(), fs.test.end());
  return fs;
}

inline std::vector<int> all_indices(const Dataset& ds) {
  std::vector<int> idx(ds.docs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return idx;
}

}  // namespace vwg
