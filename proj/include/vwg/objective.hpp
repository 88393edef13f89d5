#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vwg/corpus.hpp"
#include "vwg/error.hpp"
#include "vwg/extract.hpp"
#include "vwg/grid.hpp"
#include "vwg/metrics.hpp"
#include "vwg/net.hpp"
#include "vwg/parallel.hpp"
#include "vwg/rng.hpp"
#include "vwg/tensor.hpp"

namespace vwg {

struct LossValue {
  double ce = 0.0;
  double jaccard = 0.0;
  double total = 0.0;
};

// Mean cross entropy over all cells, probabilities clamped at 1e-12 before
// the log. The returned gradient is with respect to the pre-softmax logits,
// i.e. (p - onehot) / (H*W).
template <typename T>
std::pair<double, TensorT<T>> ce_loss(const TensorT<T>& probs, const LabelMask& mask) {
  if (probs.rows != mask.rows || probs.cols != mask.cols) throw ShapeMismatch("probs/mask shapes differ");
  const double n = static_cast<double>(probs.rows) * probs.cols;
  TensorT<T> grad(probs.rows, probs.cols, probs.channels);
  double loss = 0.0;
  for (int r = 0; r < probs.rows; ++r)
    for (int c = 0; c < probs.cols; ++c) {
      const int gt = mask.at(r, c);
      if (gt < 0 || gt >= probs.channels) throw ShapeMismatch("mask class out of range");
      const T* p = probs.cell(r, c);
      T* g = grad.cell(r, c);
      loss -= std::log(std::max(static_cast<double>(p[gt]), 1e-12));
      for (int k = 0; k < probs.channels; ++k)
        g[k] = static_cast<T>((static_cast<double>(p[k]) - (k == gt ? 1.0 : 0.0)) / n);
    }
  return {loss / n, std::move(grad)};
}

// Soft Jaccard over foreground classes: J_c = (sum p*t + eps) / (sum (p + t
// - p*t) + eps), loss = 1 - mean_c J_c. Classes absent from the ground truth
// still contribute via eps / (sum p + eps), penalizing false-positive mass.
// The returned gradient is with respect to the probabilities.
template <typename T>
std::pair<double, TensorT<T>> jaccard_loss(const TensorT<T>& probs, const LabelMask& mask,
                                           const FieldSchema& schema) {
  if (probs.rows != mask.rows || probs.cols != mask.cols) throw ShapeMismatch("probs/mask shapes differ");
  const int K = schema.num_fields();
  if (probs.channels != K + 1) throw ShapeMismatch("probs channels != K+1");
  constexpr double eps = 1e-7;

  std::vector<double> inter(static_cast<std::size_t>(K) + 1, 0.0);
  std::vector<double> uni(static_cast<std::size_t>(K) + 1, 0.0);
  for (int r = 0; r < probs.rows; ++r)
    for (int c = 0; c < probs.cols; ++c) {
      const int gt = mask.at(r, c);
      const T* p = probs.cell(r, c);
      for (int k = 1; k <= K; ++k) {
        const double pk = static_cast<double>(p[k]);
        const double t = gt == k ? 1.0 : 0.0;
        inter[static_cast<std::size_t>(k)] += pk * t;
        uni[static_cast<std::size_t>(k)] += pk + t - pk * t;
      }
    }

  double mean_j = 0.0;
  std::vector<double> dnum(static_cast<std::size_t>(K) + 1, 0.0);  // (I+eps) / (U+eps)^2 per class
  std::vector<double> dden(static_cast<std::size_t>(K) + 1, 0.0);  // 1 / (U+eps) per class
  for (int k = 1; k <= K; ++k) {
    const double i_eps = inter[static_cast<std::size_t>(k)] + eps;
    const double u_eps = uni[static_cast<std::size_t>(k)] + eps;
    mean_j += i_eps / u_eps;
    dnum[static_cast<std::size_t>(k)] = i_eps / (u_eps * u_eps);
    dden[static_cast<std::size_t>(k)] = 1.0 / u_eps;
  }
  mean_j /= K;

  TensorT<T> grad(probs.rows, probs.cols, probs.channels);
  for (int r = 0; r < probs.rows; ++r)
    for (int c = 0; c < probs.cols; ++c) {
      const int gt = mask.at(r, c);
      T* g = grad.cell(r, c);
      for (int k = 1; k <= K; ++k) {
        const double t = gt == k ? 1.0 : 0.0;
        // dJ_k/dp_k(x) = (t*(U+eps) - (I+eps)*(1-t)) / (U+eps)^2
        const double dj = t * dden[static_cast<std::size_t>(k)] - (1.0 - t) * dnum[static_cast<std::size_t>(k)];
        g[k] = static_cast<T>(-dj / K);
      }
    }
  return {1.0 - mean_j, std::move(grad)};
}

// Converts a gradient with respect to probabilities into one with respect to
// logits through the softmax Jacobian.
template <typename T>
TensorT<T> softmax_vjp(const TensorT<T>& probs, const TensorT<T>& grad_probs) {
  TensorT<T> out(probs.rows, probs.cols, probs.channels);
  for (int r = 0; r < probs.rows; ++r)
    for (int c = 0; c < probs.cols; ++c) {
      const T* p = probs.cell(r, c);
      const T* g = grad_probs.cell(r, c);
      T* o = out.cell(r, c);
      T dot = T(0);
      for (int k = 0; k < probs.channels; ++k) dot += p[k] * g[k];
      for (int k = 0; k < probs.channels; ++k) o[k] = p[k] * (g[k] - dot);
    }
  return out;
}

// Combined loss (cross entropy + soft Jaccard) with its gradient expressed
// with respect to the logits, ready to seed the network backward pass.
template <typename T>
std::pair<LossValue, TensorT<T>> combined_loss(const TensorT<T>& probs, const LabelMask& mask,
                                               const FieldSchema& schema) {
  auto [ce, ce_grad] = ce_loss(probs, mask);
  auto [jac, jac_grad_probs] = jaccard_loss(probs, mask, schema);
  const TensorT<T> jac_grad = softmax_vjp(probs, jac_grad_probs);
  for (std::size_t i = 0; i < ce_grad.v.size(); ++i) ce_grad.v[i] += jac_grad.v[i];
  LossValue lv{ce, jac, ce + jac};
  return {lv, std::move(ce_grad)};
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  ParamSet m, v;
  std::int64_t t = 0;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(const ArchConfig& arch) {
    for (const auto& shape : param_shapes(arch)) {
      m.tensors.emplace_back(shape.name, shape.dims);
      v.tensors.emplace_back(shape.name, shape.dims);
    }
  }

  explicit AdamState(const ParamSet& like) {
    for (const auto& t : like.tensors) {
      m.tensors.emplace_back(t.name, t.dims);
      v.tensors.emplace_back(t.name, t.dims);
    }
  }
};

// Standard Adam with bias correction, in place.
inline void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads) {
  if (params.tensors.size() != grads.tensors.size() || params.tensors.size() != state.m.tensors.size())
    throw ShapeMismatch("adam_step: tensor count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
    auto& p = params.tensors[ti];
    const auto& g = grads.tensors[ti];
    auto& m = state.m.tensors[ti];
    auto& v = state.v.tensors[ti];
    if (g.v.size() != p.v.size() || g.name != p.name)
      throw ShapeMismatch("adam_step: gradient shape mismatch at " + p.name);
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      const double gv = static_cast<double>(g.v[i]);
      if (!std::isfinite(gv)) throw NonFiniteGradient("non-finite gradient in " + p.name);
      const double mi = state.beta1 * m.v[i] + (1.0 - state.beta1) * gv;
      const double vi = state.beta2 * v.v[i] + (1.0 - state.beta2) * gv * gv;
      m.v[i] = static_cast<float>(mi);
      v.v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.v[i] = static_cast<float>(p.v[i] - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 100;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int patience = 20;
  EncoderKind encoder_kind = EncoderKind::vwg_pad;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_miou = 0.0;
};

struct Checkpoint {
  ArchConfig arch;
  FieldSchema schema;
  GridSpec grid;
  Embedder embedder;  // table entries are not persisted, only the config
  EncoderKind encoder_kind = EncoderKind::vwg_pad;
  ParamSet params;
  int epochs_trained = 0;
  double best_val_miou = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochStats> history;
};

inline ArchConfig make_arch(EncoderKind kind, const GridSpec& spec, const FieldSchema& schema,
                            int base_channels = 16, int depth = 3) {
  ArchConfig arch;
  arch.variant = kind == EncoderKind::vwg_2enc ? NetVariant::dual : NetVariant::single;
  arch.in_channels_main = encoder_main_channels(kind, spec.dim);
  arch.in_channels_aux = 3;
  arch.base_channels = base_channels;
  arch.depth = depth;
  arch.num_classes = schema.num_classes();
  return arch;
}

// Seeded, deterministic training loop: per epoch the train set is shuffled,
// batch gradients are averaged (samples computed in parallel, summed in a
// fixed order), Adam updates the parameters, and validation mean-IoU decides
// early stopping and which parameters the checkpoint keeps.
inline TrainResult train(const Dataset& ds, const std::vector<int>& train_idx,
                         const std::vector<int>& val_idx, const ArchConfig& arch, const GridSpec& spec,
                         const Embedder& embedder, const TrainConfig& cfg) {
  if (train_idx.empty()) throw EmptySplit("empty training split");
  if (val_idx.empty()) throw EmptySplit("empty validation split");
  if (cfg.batch_size < 1) throw Error("batch_size must be >= 1");
  if (arch.in_channels_main != encoder_main_channels(cfg.encoder_kind, spec.dim))
    throw ShapeMismatch("arch input channels do not match encoder kind");

  struct Sample {
    EncodedInput input;
    LabelMask target;
  };
  auto encode_split = [&](const std::vector<int>& idx) {
    std::vector<Sample> out(idx.size());
    parallel_for(idx.size(), [&](std::size_t i) {
      const LabeledDocument& ldoc = ds.docs[static_cast<std::size_t>(idx[i])];
      out[i].input = encode_document(ldoc.document, cfg.encoder_kind, spec, embedder);
      out[i].target = rasterize_target_mask(ldoc, spec);
    });
    return out;
  };
  const std::vector<Sample> train_samples = encode_split(train_idx);
  const std::vector<Sample> val_samples = encode_split(val_idx);

  ParamSet params = init_params(arch, cfg.seed);
  AdamState adam(arch);
  Xoshiro256 shuffle_rng(derive_seed(cfg.seed, 0x7261696eULL));

  std::vector<std::size_t> order(train_samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  ParamSet best_params = params;
  double best_miou = -1.0;
  int best_epoch = 0;
  int since_best = 0;

  auto validate_miou = [&](const ParamSet& p) {
    std::vector<double> ious(val_samples.size());
    parallel_for(val_samples.size(), [&](std::size_t i) {
      const Sample& s = val_samples[i];
      auto [probs, cache] = forward(p, arch, s.input.main,
                                    s.input.aux ? std::optional<Tensor>(*s.input.aux) : std::nullopt);
      ious[i] = iou_metric(argmax_mask(probs), s.target, ds.schema);
    });
    double sum = 0.0;
    for (double v : ious) sum += v;
    return sum / static_cast<double>(ious.size());
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      std::vector<ParamSet> sample_grads(count);
      std::vector<double> sample_losses(count);
      parallel_for(count, [&](std::size_t bi) {
        const Sample& s = train_samples[order[start + bi]];
        auto [probs, cache] = forward(params, arch, s.input.main,
                                      s.input.aux ? std::optional<Tensor>(*s.input.aux) : std::nullopt);
        auto [lv, grad_logits] = combined_loss(probs, s.target, ds.schema);
        sample_grads[bi] = backward(params, arch, cache, grad_logits);
        sample_losses[bi] = lv.total;
      });
      ParamSet batch_grads = std::move(sample_grads[0]);
      for (std::size_t bi = 1; bi < count; ++bi)
        for (std::size_t ti = 0; ti < batch_grads.tensors.size(); ++ti) {
          auto& acc = batch_grads.tensors[ti].v;
          const auto& add = sample_grads[bi].tensors[ti].v;
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += add[i];
        }
      const float scale = 1.0f / static_cast<float>(count);
      for (auto& t : batch_grads.tensors)
        for (auto& x : t.v) x *= scale;
      adam_step(adam, params, batch_grads);
      for (double l : sample_losses) epoch_loss += l;
    }
    epoch_loss /= static_cast<double>(order.size());

    const double miou = validate_miou(params);
    result.history.push_back({epoch, epoch_loss, miou});
    if (miou > best_miou) {
      best_miou = miou;
      best_params = params;
      best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= cfg.patience) break;
    }
  }

  result.checkpoint.arch = arch;
  result.checkpoint.schema = ds.schema;
  result.checkpoint.grid = spec;
  result.checkpoint.embedder = embedder;
  result.checkpoint.encoder_kind = cfg.encoder_kind;
  result.checkpoint.params = std::move(best_params);
  result.checkpoint.epochs_trained = best_epoch;
  result.checkpoint.best_val_miou = best_miou;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint files:
//   magic "VWGM" | version u32 | header length u32 | UTF-8 JSON header |
//   tensor count u32 | per tensor: name (u16 len + bytes), rank u8,
//   dims u32 x rank, f32 LE payload
// ---------------------------------------------------------------------------

namespace objdetail {

inline nlohmann::json checkpoint_header(const Checkpoint& ck) {
  nlohmann::json j;
  j["arch"] = {{"variant", ck.arch.variant == NetVariant::dual ? "dual" : "single"},
               {"in_channels_main", ck.arch.in_channels_main},
               {"in_channels_aux", ck.arch.in_channels_aux},
               {"base_channels", ck.arch.base_channels},
               {"depth", ck.arch.depth},
               {"num_classes", ck.arch.num_classes}};
  j["schema"] = ck.schema.field_names;
  j["grid"] = {{"rows", ck.grid.rows}, {"cols", ck.grid.cols}, {"dim", ck.grid.dim}};
  char seedbuf[32];
  std::snprintf(seedbuf, sizeof(seedbuf), "%016llx", static_cast<unsigned long long>(ck.embedder.seed));
  j["embedder"] = {{"dim", ck.embedder.dim},
                   {"mode", ck.embedder.mode == EmbedMode::hashed ? "hashed" : "table"},
                   {"ngram_min", ck.embedder.ngram_min},
                   {"ngram_max", ck.embedder.ngram_max},
                   {"bucket_count", ck.embedder.bucket_count},
                   {"seed", std::string(seedbuf)}};
  j["encoder_kind"] = encoder_kind_name(ck.encoder_kind);
  j["metadata"] = {{"epochs_trained", ck.epochs_trained}, {"best_val_miou", ck.best_val_miou}};
  return j;
}

inline void checkpoint_from_header(const nlohmann::json& j, Checkpoint& ck) {
  const auto& a = j.at("arch");
  ck.arch.variant = a.at("variant").get<std::string>() == "dual" ? NetVariant::dual : NetVariant::single;
  ck.arch.in_channels_main = a.at("in_channels_main").get<int>();
  ck.arch.in_channels_aux = a.at("in_channels_aux").get<int>();
  ck.arch.base_channels = a.at("base_channels").get<int>();
  ck.arch.depth = a.at("depth").get<int>();
  ck.arch.num_classes = a.at("num_classes").get<int>();
  ck.schema.field_names = j.at("schema").get<std::vector<std::string>>();
  ck.grid.rows = j.at("grid").at("rows").get<int>();
  ck.grid.cols = j.at("grid").at("cols").get<int>();
  ck.grid.dim = j.at("grid").at("dim").get<int>();
  const auto& e = j.at("embedder");
  ck.embedder.dim = e.at("dim").get<int>();
  ck.embedder.mode =
      e.at("mode").get<std::string>() == "hashed" ? EmbedMode::hashed : EmbedMode::table_with_hashed_fallback;
  ck.embedder.ngram_min = e.at("ngram_min").get<int>();
  ck.embedder.ngram_max = e.at("ngram_max").get<int>();
  ck.embedder.bucket_count = e.at("bucket_count").get<std::uint32_t>();
  ck.embedder.seed = std::stoull(e.at("seed").get<std::string>(), nullptr, 16);
  ck.encoder_kind = parse_encoder_kind(j.at("encoder_kind").get<std::string>());
  ck.epochs_trained = j.at("metadata").at("epochs_trained").get<int>();
  ck.best_val_miou = j.at("metadata").at("best_val_miou").get<double>();
}

}  // namespace objdetail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoFailure("cannot open for write: " + path);
  os.write("VWGM", 4);
  detail::put_u32(os, 1);  // format version
  const std::string header = objdetail::checkpoint_header(ck).dump();
  detail::put_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(ck.params.tensors.size()));
  for (const auto& t : ck.params.tensors) {
    const std::uint16_t len = static_cast<std::uint16_t>(t.name.size());
    const unsigned char lo = static_cast<unsigned char>(len & 0xff), hi = static_cast<unsigned char>(len >> 8);
    os.write(reinterpret_cast<const char*>(&lo), 1);
    os.write(reinterpret_cast<const char*>(&hi), 1);
    os.write(t.name.data(), len);
    const unsigned char rank = static_cast<unsigned char>(t.dims.size());
    os.write(reinterpret_cast<const char*>(&rank), 1);
    for (int d : t.dims) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (float f : t.v) detail::put_f32(os, f);
  }
  if (!os) throw IoFailure("short write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoFailure("cannot open for read: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VWGM", 4) != 0) throw BadMagic("not a VWGM checkpoint: " + path);
  const std::uint32_t version = detail::get_u32(is);
  if (version != 1) throw VersionMismatch("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t header_len = detail::get_u32(is);
  std::string header(header_len, '\0');
  is.read(header.data(), header_len);
  if (!is) throw IoFailure("truncated header: " + path);
  Checkpoint ck;
  try {
    objdetail::checkpoint_from_header(nlohmann::json::parse(header), ck);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFile(path + ": bad checkpoint header: " + e.what());
  }
  const std::uint32_t count = detail::get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    unsigned char lo = 0, hi = 0;
    is.read(reinterpret_cast<char*>(&lo), 1);
    is.read(reinterpret_cast<char*>(&hi), 1);
    if (!is) throw IoFailure("truncated tensor name: " + path);
    std::string name(static_cast<std::size_t>(lo) | (static_cast<std::size_t>(hi) << 8), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    unsigned char rank = 0;
    is.read(reinterpret_cast<char*>(&rank), 1);
    if (!is) throw IoFailure("truncated tensor header: " + path);
    std::vector<int> dims(rank);
    std::size_t total = 1;
    for (auto& d : dims) {
      d = static_cast<int>(detail::get_u32(is));
      total *= static_cast<std::size_t>(d);
    }
    NamedTensorT<float> t(name, dims);
    for (std::size_t k = 0; k < total; ++k) t.v[k] = detail::get_f32(is);
    ck.params.tensors.push_back(std::move(t));
  }
  return ck;
}

}  // namespace vwg
