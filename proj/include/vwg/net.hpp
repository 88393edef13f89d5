#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vwg/error.hpp"
#include "vwg/rng.hpp"
#include "vwg/tensor.hpp"

namespace vwg {

enum class NetVariant { single, dual };

// Compact encoder-decoder segmentation net: `depth` stages of
// (conv3x3+ReLU)x2 + 2x2 max-pool, a bottleneck pair, and a mirrored decoder
// of nearest-neighbor upsample + conv + skip concatenation + two fusion
// convs, closed by a 1x1 conv and per-cell softmax. The dual variant runs a
// second encoder over the raw image and concatenates both encoders' skips
// (and pooled outputs, at the bottleneck).
struct ArchConfig {
  NetVariant variant = NetVariant::single;
  int in_channels_main = 0;
  int in_channels_aux = 3;
  int base_channels = 16;
  int depth = 3;
  int num_classes = 0;  // K + 1

  int width_at(int stage) const { return base_channels << stage; }
};

template <typename T>
struct NamedTensorT {
  std::string name;
  std::vector<int> dims;
  std::vector<T> v;

  NamedTensorT() = default;
  NamedTensorT(std::string n, std::vector<int> d) : name(std::move(n)), dims(std::move(d)) {
    std::size_t total = 1;
    for (int x : dims) total *= static_cast<std::size_t>(x);
    v.assign(total, T(0));
  }
};

template <typename T>
struct ParamSetT {
  std::vector<NamedTensorT<T>> tensors;

  const NamedTensorT<T>& at(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw ShapeMismatch("no parameter tensor named " + name);
  }
  NamedTensorT<T>& at(const std::string& name) {
    for (auto& t : tensors)
      if (t.name == name) return t;
    throw ShapeMismatch("no parameter tensor named " + name);
  }

  template <typename U>
  ParamSetT<U> cast() const {
    ParamSetT<U> out;
    for (const auto& t : tensors) {
      NamedTensorT<U> nt(t.name, t.dims);
      for (std::size_t i = 0; i < t.v.size(); ++i) nt.v[i] = static_cast<U>(t.v[i]);
      out.tensors.push_back(std::move(nt));
    }
    return out;
  }
};

using ParamSet = ParamSetT<float>;

struct TensorShape {
  std::string name;
  std::vector<int> dims;  // conv kernels are (kh, kw, in, out); biases (out)
};

namespace netdetail {

inline void validate(const ArchConfig& a) {
  if (a.depth < 1) throw ShapeMismatch("depth must be >= 1");
  if (a.base_channels < 4) throw ShapeMismatch("base_channels must be >= 4");
  if (a.num_classes < 2) throw ShapeMismatch("num_classes must be >= 2");
  if (a.in_channels_main < 1) throw ShapeMismatch("in_channels_main must be >= 1");
  if (a.variant == NetVariant::dual && a.in_channels_aux < 1)
    throw ShapeMismatch("in_channels_aux must be >= 1");
}

inline void push_conv(std::vector<TensorShape>& out, const std::string& prefix, int k, int cin, int cout) {
  out.push_back({prefix + ".w", {k, k, cin, cout}});
  out.push_back({prefix + ".b", {cout}});
}

}  // namespace netdetail

// Every parameter tensor of the architecture, in the fixed order used by
// initialization, optimizer state and checkpoints.
inline std::vector<TensorShape> param_shapes(const ArchConfig& arch) {
  netdetail::validate(arch);
  std::vector<TensorShape> out;
  const bool dual = arch.variant == NetVariant::dual;
  for (int s = 0; s < arch.depth; ++s) {
    const int cin = s == 0 ? arch.in_channels_main : arch.width_at(s - 1);
    netdetail::push_conv(out, "enc" + std::to_string(s) + ".conv1", 3, cin, arch.width_at(s));
    netdetail::push_conv(out, "enc" + std::to_string(s) + ".conv2", 3, arch.width_at(s), arch.width_at(s));
  }
  if (dual) {
    for (int s = 0; s < arch.depth; ++s) {
      const int cin = s == 0 ? arch.in_channels_aux : arch.width_at(s - 1);
      netdetail::push_conv(out, "aux" + std::to_string(s) + ".conv1", 3, cin, arch.width_at(s));
      netdetail::push_conv(out, "aux" + std::to_string(s) + ".conv2", 3, arch.width_at(s), arch.width_at(s));
    }
  }
  const int bottom_in = arch.width_at(arch.depth - 1) * (dual ? 2 : 1);
  netdetail::push_conv(out, "bottleneck.conv1", 3, bottom_in, arch.width_at(arch.depth));
  netdetail::push_conv(out, "bottleneck.conv2", 3, arch.width_at(arch.depth), arch.width_at(arch.depth));
  for (int s = arch.depth - 1; s >= 0; --s) {
    const int w = arch.width_at(s);
    netdetail::push_conv(out, "dec" + std::to_string(s) + ".up", 3, arch.width_at(s + 1), w);
    netdetail::push_conv(out, "dec" + std::to_string(s) + ".fuse1", 3, w * (dual ? 3 : 2), w);
    netdetail::push_conv(out, "dec" + std::to_string(s) + ".fuse2", 3, w, w);
  }
  netdetail::push_conv(out, "head", 1, arch.base_channels, arch.num_classes);
  return out;
}

inline std::int64_t param_count(const ArchConfig& arch) {
  std::int64_t n = 0;
  for (const auto& s : param_shapes(arch)) {
    std::int64_t p = 1;
    for (int d : s.dims) p *= d;
    n += p;
  }
  return n;
}

// He-uniform kernels (bound sqrt(6 / fan_in)) drawn from one seeded stream in
// shape order; biases zero.
inline ParamSet init_params(const ArchConfig& arch, std::uint64_t seed) {
  ParamSet params;
  Xoshiro256 rng(seed);
  for (const auto& shape : param_shapes(arch)) {
    NamedTensorT<float> t(shape.name, shape.dims);
    if (shape.dims.size() == 4) {
      const double fan_in = static_cast<double>(shape.dims[0]) * shape.dims[1] * shape.dims[2];
      const double bound = std::sqrt(6.0 / fan_in);
      for (auto& x : t.v) x = static_cast<float>((2.0 * rng.next_double() - 1.0) * bound);
    }
    params.tensors.push_back(std::move(t));
  }
  return params;
}

// ---------------------------------------------------------------------------
// Forward / backward primitives
// ---------------------------------------------------------------------------

namespace netdetail {

// 3x3 convolution with zero padding 1 (or 1x1 when the kernel says so),
// followed by ReLU when `relu` is set. Weights are (kh, kw, in, out) so the
// innermost loop runs contiguously over output channels.
template <typename T>
TensorT<T> conv_forward(const TensorT<T>& x, const NamedTensorT<T>& w, const NamedTensorT<T>& b,
                        bool relu) {
  const int kh = w.dims[0], kw = w.dims[1], cin = w.dims[2], cout = w.dims[3];
  if (cin != x.channels) throw ShapeMismatch(w.name + ": input has " + std::to_string(x.channels) +
                                             " channels, kernel expects " + std::to_string(cin));
  const int pad = kh / 2;
  TensorT<T> y(x.rows, x.cols, cout);
  for (int r = 0; r < y.rows; ++r)
    for (int c = 0; c < y.cols; ++c) {
      T* ycell = y.cell(r, c);
      for (int co = 0; co < cout; ++co) ycell[co] = b.v[static_cast<std::size_t>(co)];
    }
  for (int ky = 0; ky < kh; ++ky) {
    const int r0 = std::max(0, pad - ky), r1 = x.rows - std::max(0, ky - pad);
    for (int kx = 0; kx < kw; ++kx) {
      const int c0 = std::max(0, pad - kx), c1 = x.cols - std::max(0, kx - pad);
      const T* wtap = w.v.data() + (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
      for (int r = r0; r < r1; ++r) {
        const T* xrow = x.cell(r + ky - pad, 0);
        T* yrow = y.cell(r, 0);
        for (int c = c0; c < c1; ++c) {
          const T* xcell = xrow + static_cast<std::size_t>(c + kx - pad) * cin;
          T* ycell = yrow + static_cast<std::size_t>(c) * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const T s = xcell[ci];
            if (s == T(0)) continue;
            const T* wrow = wtap + static_cast<std::size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) ycell[co] += s * wrow[co];
          }
        }
      }
    }
  }
  if (relu)
    for (auto& v : y.v)
      if (v < T(0)) v = T(0);
  return y;
}

// Backward through conv(+ReLU). `g` is the gradient at the (post-ReLU)
// output; `act` is that same output, used for the ReLU mask. Accumulates into
// gw/gb and returns the input gradient.
template <typename T>
TensorT<T> conv_backward(const TensorT<T>& x, const NamedTensorT<T>& w, const TensorT<T>& act,
                         const TensorT<T>& g_in, bool relu, NamedTensorT<T>& gw, NamedTensorT<T>& gb) {
  const int kh = w.dims[0], kw = w.dims[1], cin = w.dims[2], cout = w.dims[3];
  const int pad = kh / 2;
  TensorT<T> g = g_in;
  if (relu) {
    for (std::size_t i = 0; i < g.v.size(); ++i)
      if (act.v[i] <= T(0)) g.v[i] = T(0);
  }
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const T* gcell = g.cell(r, c);
      for (int co = 0; co < cout; ++co) gb.v[static_cast<std::size_t>(co)] += gcell[co];
    }
  TensorT<T> gx(x.rows, x.cols, cin);
  for (int ky = 0; ky < kh; ++ky) {
    const int r0 = std::max(0, pad - ky), r1 = x.rows - std::max(0, ky - pad);
    for (int kx = 0; kx < kw; ++kx) {
      const int c0 = std::max(0, pad - kx), c1 = x.cols - std::max(0, kx - pad);
      const std::size_t tap = (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
      const T* wtap = w.v.data() + tap;
      T* gwtap = gw.v.data() + tap;
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) {
          const T* xcell = x.cell(r + ky - pad, c + kx - pad);
          T* gxcell = gx.cell(r + ky - pad, c + kx - pad);
          const T* gcell = g.cell(r, c);
          for (int ci = 0; ci < cin; ++ci) {
            const T s = xcell[ci];
            const T* wrow = wtap + static_cast<std::size_t>(ci) * cout;
            T* gwrow = gwtap + static_cast<std::size_t>(ci) * cout;
            T acc = T(0);
            for (int co = 0; co < cout; ++co) {
              const T gv = gcell[co];
              gwrow[co] += s * gv;
              acc += wrow[co] * gv;
            }
            gxcell[ci] += acc;
          }
        }
      }
    }
  }
  return gx;
}

template <typename T>
TensorT<T> maxpool2(const TensorT<T>& x, std::vector<std::uint8_t>& argmax) {
  const int rows = x.rows / 2, cols = x.cols / 2, ch = x.channels;
  TensorT<T> y(rows, cols, ch);
  argmax.assign(y.size(), 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const T* c00 = x.cell(2 * r, 2 * c);
      const T* c01 = x.cell(2 * r, 2 * c + 1);
      const T* c10 = x.cell(2 * r + 1, 2 * c);
      const T* c11 = x.cell(2 * r + 1, 2 * c + 1);
      T* ycell = y.cell(r, c);
      std::uint8_t* am = argmax.data() + (static_cast<std::size_t>(r) * cols + c) * ch;
      for (int k = 0; k < ch; ++k) {
        T best = c00[k];
        std::uint8_t idx = 0;
        if (c01[k] > best) { best = c01[k]; idx = 1; }
        if (c10[k] > best) { best = c10[k]; idx = 2; }
        if (c11[k] > best) { best = c11[k]; idx = 3; }
        ycell[k] = best;
        am[k] = idx;
      }
    }
  return y;
}

template <typename T>
TensorT<T> maxpool2_backward(const TensorT<T>& g, const std::vector<std::uint8_t>& argmax, int in_rows,
                             int in_cols) {
  TensorT<T> gx(in_rows, in_cols, g.channels);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const T* gcell = g.cell(r, c);
      const std::uint8_t* am = argmax.data() + (static_cast<std::size_t>(r) * g.cols + c) * g.channels;
      for (int k = 0; k < g.channels; ++k) {
        const int dy = am[k] >> 1, dx = am[k] & 1;
        gx.at(2 * r + dy, 2 * c + dx, k) += gcell[k];
      }
    }
  return gx;
}

template <typename T>
TensorT<T> upsample2(const TensorT<T>& x) {
  TensorT<T> y(x.rows * 2, x.cols * 2, x.channels);
  for (int r = 0; r < y.rows; ++r)
    for (int c = 0; c < y.cols; ++c) {
      const T* src = x.cell(r / 2, c / 2);
      T* dst = y.cell(r, c);
      for (int k = 0; k < x.channels; ++k) dst[k] = src[k];
    }
  return y;
}

template <typename T>
TensorT<T> upsample2_backward(const TensorT<T>& g) {
  TensorT<T> gx(g.rows / 2, g.cols / 2, g.channels);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const T* gcell = g.cell(r, c);
      T* dst = gx.cell(r / 2, c / 2);
      for (int k = 0; k < g.channels; ++k) dst[k] += gcell[k];
    }
  return gx;
}

template <typename T>
TensorT<T> concat_channels(const std::vector<const TensorT<T>*>& parts) {
  int ch = 0;
  for (const auto* p : parts) ch += p->channels;
  TensorT<T> y(parts[0]->rows, parts[0]->cols, ch);
  for (int r = 0; r < y.rows; ++r)
    for (int c = 0; c < y.cols; ++c) {
      T* dst = y.cell(r, c);
      for (const auto* p : parts) {
        const T* src = p->cell(r, c);
        for (int k = 0; k < p->channels; ++k) *dst++ = src[k];
      }
    }
  return y;
}

template <typename T>
std::vector<TensorT<T>> split_channels(const TensorT<T>& g, const std::vector<int>& widths) {
  std::vector<TensorT<T>> out;
  for (int w : widths) out.emplace_back(g.rows, g.cols, w);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const T* src = g.cell(r, c);
      for (auto& part : out) {
        T* dst = part.cell(r, c);
        for (int k = 0; k < part.channels; ++k) dst[k] = *src++;
      }
    }
  return out;
}

}  // namespace netdetail

template <typename T>
struct ForwardCacheT {
  struct EncStage {
    TensorT<T> a1, a2, pooled;
    std::vector<std::uint8_t> argmax;
  };
  struct DecStage {
    TensorT<T> upsampled, up_act, cat, f1, f2;
  };
  TensorT<T> input_main, input_aux;
  std::vector<EncStage> enc_main, enc_aux;
  TensorT<T> bottleneck_in, bn_a1, bn_a2;
  std::vector<DecStage> dec;  // indexed by stage, dec[0] is the shallowest
};

using ForwardCache = ForwardCacheT<float>;

template <typename T>
TensorT<T> softmax_cells(const TensorT<T>& logits) {
  TensorT<T> probs(logits.rows, logits.cols, logits.channels);
  const int ch = logits.channels;
  for (int r = 0; r < logits.rows; ++r)
    for (int c = 0; c < logits.cols; ++c) {
      const T* in = logits.cell(r, c);
      T* out = probs.cell(r, c);
      T mx = in[0];
      for (int k = 1; k < ch; ++k) mx = std::max(mx, in[k]);
      T sum = T(0);
      for (int k = 0; k < ch; ++k) {
        out[k] = std::exp(in[k] - mx);
        sum += out[k];
      }
      const T inv = T(1) / sum;
      for (int k = 0; k < ch; ++k) out[k] *= inv;
    }
  return probs;
}

template <typename T>
std::pair<TensorT<T>, ForwardCacheT<T>> forward(const ParamSetT<T>& params, const ArchConfig& arch,
                                                const TensorT<T>& input_main,
                                                const std::optional<TensorT<T>>& input_aux = std::nullopt) {
  using namespace netdetail;
  validate(arch);
  const bool dual = arch.variant == NetVariant::dual;
  if (input_main.channels != arch.in_channels_main)
    throw ShapeMismatch("main input has " + std::to_string(input_main.channels) + " channels, expected " +
                        std::to_string(arch.in_channels_main));
  if (dual != input_aux.has_value())
    throw ShapeMismatch(dual ? "dual variant requires an aux input" : "single variant takes no aux input");
  const int stride = 1 << arch.depth;
  if (input_main.rows % stride != 0 || input_main.cols % stride != 0)
    throw ShapeMismatch("grid dims must be divisible by 2^depth");
  if (dual && (input_aux->rows != input_main.rows || input_aux->cols != input_main.cols ||
               input_aux->channels != arch.in_channels_aux))
    throw ShapeMismatch("aux input shape mismatch");

  ForwardCacheT<T> cache;
  cache.input_main = input_main;
  if (dual) cache.input_aux = *input_aux;

  auto run_encoder = [&](const TensorT<T>& input, const std::string& prefix,
                         std::vector<typename ForwardCacheT<T>::EncStage>& stages) {
    const TensorT<T>* x = &input;
    for (int s = 0; s < arch.depth; ++s) {
      typename ForwardCacheT<T>::EncStage st;
      const std::string p = prefix + std::to_string(s);
      st.a1 = conv_forward(*x, params.at(p + ".conv1.w"), params.at(p + ".conv1.b"), true);
      st.a2 = conv_forward(st.a1, params.at(p + ".conv2.w"), params.at(p + ".conv2.b"), true);
      st.pooled = maxpool2(st.a2, st.argmax);
      stages.push_back(std::move(st));
      x = &stages.back().pooled;
    }
  };
  run_encoder(input_main, "enc", cache.enc_main);
  if (dual) run_encoder(*input_aux, "aux", cache.enc_aux);

  if (dual)
    cache.bottleneck_in = concat_channels<T>({&cache.enc_main.back().pooled, &cache.enc_aux.back().pooled});
  else
    cache.bottleneck_in = cache.enc_main.back().pooled;
  cache.bn_a1 = conv_forward(cache.bottleneck_in, params.at("bottleneck.conv1.w"),
                             params.at("bottleneck.conv1.b"), true);
  cache.bn_a2 = conv_forward(cache.bn_a1, params.at("bottleneck.conv2.w"), params.at("bottleneck.conv2.b"),
                             true);

  cache.dec.resize(static_cast<std::size_t>(arch.depth));
  const TensorT<T>* x = &cache.bn_a2;
  for (int s = arch.depth - 1; s >= 0; --s) {
    auto& d = cache.dec[static_cast<std::size_t>(s)];
    const std::string p = "dec" + std::to_string(s);
    d.upsampled = upsample2(*x);
    d.up_act = conv_forward(d.upsampled, params.at(p + ".up.w"), params.at(p + ".up.b"), true);
    if (dual)
      d.cat = concat_channels<T>({&d.up_act, &cache.enc_main[static_cast<std::size_t>(s)].a2,
                                  &cache.enc_aux[static_cast<std::size_t>(s)].a2});
    else
      d.cat = concat_channels<T>({&d.up_act, &cache.enc_main[static_cast<std::size_t>(s)].a2});
    d.f1 = conv_forward(d.cat, params.at(p + ".fuse1.w"), params.at(p + ".fuse1.b"), true);
    d.f2 = conv_forward(d.f1, params.at(p + ".fuse2.w"), params.at(p + ".fuse2.b"), true);
    x = &d.f2;
  }

  const TensorT<T> logits = conv_forward(*x, params.at("head.w"), params.at("head.b"), false);
  return {softmax_cells(logits), std::move(cache)};
}

template <typename T>
std::pair<TensorT<T>, ForwardCacheT<T>> forward(const ParamSetT<T>& params, const ArchConfig& arch,
                                                const TensorT<T>& input_main, const TensorT<T>& input_aux) {
  return forward(params, arch, input_main, std::optional<TensorT<T>>(input_aux));
}

// Exact analytic gradients of every parameter given the gradient of the loss
// with respect to the pre-softmax logits.
template <typename T>
ParamSetT<T> backward(const ParamSetT<T>& params, const ArchConfig& arch, const ForwardCacheT<T>& cache,
                      const TensorT<T>& grad_logits) {
  using namespace netdetail;
  const bool dual = arch.variant == NetVariant::dual;
  if (grad_logits.rows != cache.input_main.rows || grad_logits.cols != cache.input_main.cols ||
      grad_logits.channels != arch.num_classes)
    throw ShapeMismatch("grad_logits shape mismatch");

  ParamSetT<T> grads;
  for (const auto& shape : param_shapes(arch)) grads.tensors.emplace_back(shape.name, shape.dims);

  const TensorT<T>& head_in = cache.dec[0].f2;
  TensorT<T> g = conv_backward(head_in, params.at("head.w"), TensorT<T>{}, grad_logits, false,
                               grads.at("head.w"), grads.at("head.b"));

  std::vector<TensorT<T>> skip_grads_main(static_cast<std::size_t>(arch.depth));
  std::vector<TensorT<T>> skip_grads_aux(static_cast<std::size_t>(arch.depth));
  for (int s = 0; s < arch.depth; ++s) {
    const auto& d = cache.dec[static_cast<std::size_t>(s)];
    const std::string p = "dec" + std::to_string(s);
    TensorT<T> gf1 = conv_backward(d.f1, params.at(p + ".fuse2.w"), d.f2, g, true, grads.at(p + ".fuse2.w"),
                                   grads.at(p + ".fuse2.b"));
    TensorT<T> gcat = conv_backward(d.cat, params.at(p + ".fuse1.w"), d.f1, gf1, true,
                                    grads.at(p + ".fuse1.w"), grads.at(p + ".fuse1.b"));
    std::vector<int> widths{d.up_act.channels, cache.enc_main[static_cast<std::size_t>(s)].a2.channels};
    if (dual) widths.push_back(cache.enc_aux[static_cast<std::size_t>(s)].a2.channels);
    std::vector<TensorT<T>> parts = split_channels(gcat, widths);
    skip_grads_main[static_cast<std::size_t>(s)] = std::move(parts[1]);
    if (dual) skip_grads_aux[static_cast<std::size_t>(s)] = std::move(parts[2]);
    TensorT<T> gup = conv_backward(d.upsampled, params.at(p + ".up.w"), d.up_act, parts[0], true,
                                   grads.at(p + ".up.w"), grads.at(p + ".up.b"));
    g = upsample2_backward(gup);
  }

  TensorT<T> gbn1 = conv_backward(cache.bn_a1, params.at("bottleneck.conv2.w"), cache.bn_a2, g, true,
                                  grads.at("bottleneck.conv2.w"), grads.at("bottleneck.conv2.b"));
  TensorT<T> gbin = conv_backward(cache.bottleneck_in, params.at("bottleneck.conv1.w"), cache.bn_a1, gbn1,
                                  true, grads.at("bottleneck.conv1.w"), grads.at("bottleneck.conv1.b"));

  auto run_encoder_backward = [&](const TensorT<T>& input, const std::string& prefix,
                                  const std::vector<typename ForwardCacheT<T>::EncStage>& stages,
                                  std::vector<TensorT<T>>& skip_grads, TensorT<T> gpooled) {
    for (int s = arch.depth - 1; s >= 0; --s) {
      const auto& st = stages[static_cast<std::size_t>(s)];
      const std::string p = prefix + std::to_string(s);
      TensorT<T> ga2 = maxpool2_backward(gpooled, st.argmax, st.a2.rows, st.a2.cols);
      const auto& sg = skip_grads[static_cast<std::size_t>(s)];
      for (std::size_t i = 0; i < ga2.v.size(); ++i) ga2.v[i] += sg.v[i];
      TensorT<T> ga1 = conv_backward(st.a1, params.at(p + ".conv2.w"), st.a2, ga2, true,
                                     grads.at(p + ".conv2.w"), grads.at(p + ".conv2.b"));
      const TensorT<T>& below = s == 0 ? input : stages[static_cast<std::size_t>(s - 1)].pooled;
      gpooled = conv_backward(below, params.at(p + ".conv1.w"), st.a1, ga1, true, grads.at(p + ".conv1.w"),
                              grads.at(p + ".conv1.b"));
    }
  };

  if (dual) {
    const int main_ch = cache.enc_main.back().pooled.channels;
    std::vector<TensorT<T>> parts = split_channels(gbin, {main_ch, cache.enc_aux.back().pooled.channels});
    run_encoder_backward(cache.input_main, "enc", cache.enc_main, skip_grads_main, std::move(parts[0]));
    run_encoder_backward(cache.input_aux, "aux", cache.enc_aux, skip_grads_aux, std::move(parts[1]));
  } else {
    run_encoder_backward(cache.input_main, "enc", cache.enc_main, skip_grads_main, std::move(gbin));
  }
  return grads;
}

}  // namespace vwg
