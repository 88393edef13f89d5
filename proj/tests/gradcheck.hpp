#pragma once

// Finite-difference gradient oracle used by the unit and acceptance suites.
//
// The criterion metric compares the analytic backward pass against central
// differences with both sides evaluated in double at the f32 parameter
// values: f32 loss differencing has an inherent noise floor (~5e-5 absolute
// per gradient entry) that no implementation could push below the 1e-3
// relative bar on near-zero entries, so the oracle must be the accurate one.
// The f32 production path is checked separately: its gradients must agree
// with the double path within a mixed absolute/relative band.

#include <cmath>
#include <optional>
#include <string>

#include "vwg/net.hpp"
#include "vwg/objective.hpp"
#include "vwg/tensor.hpp"

namespace vwgtest {

inline double loss_at(const vwg::ParamSetT<double>& params, const vwg::ArchConfig& arch,
                      const vwg::TensorT<double>& in_main,
                      const std::optional<vwg::TensorT<double>>& in_aux, const vwg::LabelMask& mask,
                      const vwg::FieldSchema& schema) {
  auto [probs, cache] = vwg::forward(params, arch, in_main, in_aux);
  auto [lv, grad] = vwg::combined_loss(probs, mask, schema);
  return lv.total;
}

struct GradCheckResult {
  double max_rel_err = 0.0;        // analytic (double, at f32 params) vs central differences
  double max_f32_mixed_err = 0.0;  // f32 pipeline vs double analytic, |d| / max(|ad|, 1e-3)
  std::string worst_param;
  std::size_t worst_index = 0;
};

inline GradCheckResult gradient_check(const vwg::ParamSet& params, const vwg::ArchConfig& arch,
                                      const vwg::Tensor& in_main, const std::optional<vwg::Tensor>& in_aux,
                                      const vwg::LabelMask& mask, const vwg::FieldSchema& schema,
                                      double eps = 1e-4) {
  // production-path analytic gradients (f32 end to end)
  auto [probs_f, cache_f] = vwg::forward(params, arch, in_main, in_aux);
  auto [lv_f, grad_logits_f] = vwg::combined_loss(probs_f, mask, schema);
  const vwg::ParamSet analytic_f32 = vwg::backward(params, arch, cache_f, grad_logits_f);

  // the same computation in double at the identical parameter values
  vwg::ParamSetT<double> pd = params.cast<double>();
  vwg::TensorT<double> in_main_d(in_main.rows, in_main.cols, in_main.channels);
  for (std::size_t i = 0; i < in_main.v.size(); ++i) in_main_d.v[i] = static_cast<double>(in_main.v[i]);
  std::optional<vwg::TensorT<double>> in_aux_d;
  if (in_aux) {
    in_aux_d.emplace(in_aux->rows, in_aux->cols, in_aux->channels);
    for (std::size_t i = 0; i < in_aux->v.size(); ++i) in_aux_d->v[i] = static_cast<double>(in_aux->v[i]);
  }
  auto [probs_d, cache_d] = vwg::forward(pd, arch, in_main_d, in_aux_d);
  auto [lv_d, grad_logits_d] = vwg::combined_loss(probs_d, mask, schema);
  const vwg::ParamSetT<double> analytic = vwg::backward(pd, arch, cache_d, grad_logits_d);

  GradCheckResult result;
  for (std::size_t ti = 0; ti < pd.tensors.size(); ++ti) {
    auto& tensor = pd.tensors[ti];
    for (std::size_t i = 0; i < tensor.v.size(); ++i) {
      const double saved = tensor.v[i];
      tensor.v[i] = saved + eps;
      const double lp = loss_at(pd, arch, in_main_d, in_aux_d, mask, schema);
      tensor.v[i] = saved - eps;
      const double lm = loss_at(pd, arch, in_main_d, in_aux_d, mask, schema);
      tensor.v[i] = saved;
      const double fd = (lp - lm) / (2.0 * eps);
      const double an = analytic.tensors[ti].v[i];
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = tensor.name;
        result.worst_index = i;
      }
      const double f32_err =
          std::abs(static_cast<double>(analytic_f32.tensors[ti].v[i]) - an) / std::max(std::abs(an), 1e-3);
      result.max_f32_mixed_err = std::max(result.max_f32_mixed_err, f32_err);
    }
  }
  return result;
}

}  // namespace vwgtest
