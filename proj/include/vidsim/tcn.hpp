#pragma once

// Temporal convolutional velocity predictor: residual blocks of two
// weight-normalised dilated causal convolutions (ReLU + dropout after each),
// a 1x1 skip convolution when channel counts differ, and a linear head on the
// final time step.
//
// Parameters live in one flat vector (see ParamLayout). Arithmetic uses the
// scalar type T for storage and double for every accumulation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vidsim/error.hpp"

namespace vidsim {

struct Architecture {
  std::size_t window = 8;     // w, input time steps
  std::size_t features = 0;   // F, input channels
  std::size_t kernel = 8;     // q
  std::vector<std::size_t> channels{32, 64, 96};
  std::vector<std::size_t> dilations{1, 2, 4};
  std::size_t outputs = 2;
  double dropout = 0.1;

  void validate() const {
    if (window == 0 || features == 0 || kernel == 0 || outputs == 0)
      throw Error(ErrorKind::ShapeMismatch, "architecture sizes must be positive");
    if (channels.empty() || channels.size() != dilations.size())
      throw Error(ErrorKind::ShapeMismatch, "one dilation per residual block required");
    for (auto c : channels)
      if (c == 0) throw Error(ErrorKind::ShapeMismatch, "channel counts must be positive");
    for (auto h : dilations)
      if (h == 0) throw Error(ErrorKind::ShapeMismatch, "dilations must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorKind::InvalidArgument, "dropout must be in [0, 1)");
  }

  // Steps of history one convolution sees: h * (q - 1) + 1.
  static std::size_t receptive_span(std::size_t dilation, std::size_t kernel) { return dilation * (kernel - 1) + 1; }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct TensorSpec {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;
  std::size_t size() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
};

// Offsets of every tensor inside the flat parameter vector.
struct BlockLayout {
  std::size_t in = 0, out = 0, dilation = 1;
  std::size_t v1 = 0, g1 = 0, b1 = 0;  // conv1: v (out x in x q), gain, bias
  std::size_t v2 = 0, g2 = 0, b2 = 0;  // conv2: v (out x out x q)
  bool has_down = false;
  std::size_t wd = 0, bd = 0;          // 1x1 skip: weight (out x in), bias
};

struct ParamLayout {
  std::vector<TensorSpec> tensors;  // declared order
  std::vector<BlockLayout> blocks;
  std::size_t head_w = 0, head_b = 0;
  std::size_t total = 0;

  explicit ParamLayout(const Architecture& arch) {
    arch.validate();
    const std::size_t q = arch.kernel;
    auto add = [&](std::string name, std::vector<std::size_t> shape) {
      TensorSpec t{std::move(name), total, std::move(shape)};
      total += t.size();
      tensors.push_back(t);
      return t.offset;
    };
    std::size_t in = arch.features;
    for (std::size_t m = 0; m < arch.channels.size(); ++m) {
      const std::size_t out = arch.channels[m];
      const std::string p = "block" + std::to_string(m + 1) + ".";
      BlockLayout b;
      b.in = in;
      b.out = out;
      b.dilation = arch.dilations[m];
      b.v1 = add(p + "conv1.v", {out, in, q});
      b.g1 = add(p + "conv1.g", {out});
      b.b1 = add(p + "conv1.b", {out});
      b.v2 = add(p + "conv2.v", {out, out, q});
      b.g2 = add(p + "conv2.g", {out});
      b.b2 = add(p + "conv2.b", {out});
      b.has_down = in != out;
      if (b.has_down) {
        b.wd = add(p + "down.w", {out, in});
        b.bd = add(p + "down.b", {out});
      }
      blocks.push_back(b);
      in = out;
    }
    head_w = add("head.w", {arch.outputs, in});
    head_b = add("head.b", {arch.outputs});
  }
};

enum class Mode { Inference, Training };

namespace detail {

// out[e] = bias + sum_g W_g . in[e - h g] for every e with need[e]; weights in
// [g][c][o] layout. Accumulates in double.
template <class T>
void causal_conv(const T* in, std::size_t len, std::size_t cin, const T* w_gco, const T* bias, std::size_t cout,
                 std::size_t q, std::size_t h, const std::vector<char>& need, T* out, std::vector<double>& acc) {
  acc.resize(cout);
  for (std::size_t e = 0; e < len; ++e) {
    if (!need[e]) continue;
    for (std::size_t o = 0; o < cout; ++o) acc[o] = bias ? static_cast<double>(bias[o]) : 0.0;
    for (std::size_t g = 0; g < q && h * g <= e; ++g) {
      const T* src = in + (e - h * g) * cin;
      const T* wg = w_gco + g * cin * cout;
      for (std::size_t c = 0; c < cin; ++c) {
        const double s = static_cast<double>(src[c]);
        if (s == 0.0) continue;
        const T* wc = wg + c * cout;
        double* a = acc.data();
        for (std::size_t o = 0; o < cout; ++o) a[o] += static_cast<double>(wc[o]) * s;
      }
    }
    T* dst = out + e * cout;
    for (std::size_t o = 0; o < cout; ++o) dst[o] = static_cast<T>(acc[o]);
  }
}

// Backward of causal_conv for the steps in `need`: accumulates weight grads
// (layout [g][c][o]), bias grads and input grads (double buffers).
template <class T>
void causal_conv_backward(const T* in, std::size_t len, std::size_t cin, const T* w_goc, std::size_t cout,
                          std::size_t q, std::size_t h, const std::vector<char>& need, const double* dout,
                          double* dw_gco, double* dbias, double* din) {
  for (std::size_t e = 0; e < len; ++e) {
    if (!need[e]) continue;
    const double* d = dout + e * cout;
    if (dbias)
      for (std::size_t o = 0; o < cout; ++o) dbias[o] += d[o];
    for (std::size_t g = 0; g < q && h * g <= e; ++g) {
      const std::size_t src_e = e - h * g;
      const T* src = in + src_e * cin;
      double* dwg = dw_gco + g * cin * cout;
      for (std::size_t c = 0; c < cin; ++c) {
        const double s = static_cast<double>(src[c]);
        if (s == 0.0) continue;
        double* dwc = dwg + c * cout;
        for (std::size_t o = 0; o < cout; ++o) dwc[o] += s * d[o];
      }
      if (din) {
        const T* wg = w_goc + g * cout * cin;
        double* dz = din + src_e * cin;
        for (std::size_t o = 0; o < cout; ++o) {
          const double s = d[o];
          if (s == 0.0) continue;
          const T* wo = wg + o * cin;
          for (std::size_t c = 0; c < cin; ++c) dz[c] += s * static_cast<double>(wo[c]);
        }
      }
    }
  }
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Effective kernel w = g * v / ||v|| per output channel. `v` is out x (in*q).
template <class T>
std::vector<T> weight_norm_kernel(std::span<const T> v, std::span<const T> g, std::size_t out) {
  const std::size_t per = v.size() / out;
  std::vector<T> w(v.size());
  for (std::size_t o = 0; o < out; ++o) {
    double n2 = 0.0;
    for (std::size_t i = 0; i < per; ++i) n2 += static_cast<double>(v[o * per + i]) * static_cast<double>(v[o * per + i]);
    const double n = std::sqrt(n2);
    if (!(n > 0.0)) throw Error(ErrorKind::InvalidArgument, "weight-norm direction has zero norm");
    const double scale = static_cast<double>(g[o]) / n;
    for (std::size_t i = 0; i < per; ++i) w[o * per + i] = static_cast<T>(scale * static_cast<double>(v[o * per + i]));
  }
  return w;
}

// Dilated causal convolution over a whole sequence, zero-padded on the left.
// input: len x cin (row-major), kernel: cout x cin x q, bias: cout (may be empty).
template <class T>
std::vector<T> dilated_causal_conv(std::span<const T> input, std::size_t len, std::size_t cin,
                                   std::span<const T> kernel, std::span<const T> bias, std::size_t cout,
                                   std::size_t q, std::size_t dilation) {
  if (len == 0 || input.size() != len * cin) throw Error(ErrorKind::ShapeMismatch, "conv input shape");
  if (kernel.size() != cout * cin * q) throw Error(ErrorKind::ShapeMismatch, "conv kernel shape");
  if (!bias.empty() && bias.size() != cout) throw Error(ErrorKind::ShapeMismatch, "conv bias shape");
  if (dilation == 0 || q == 0) throw Error(ErrorKind::ShapeMismatch, "conv dilation and kernel size must be positive");
  std::vector<T> w_gco(kernel.size());
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t g = 0; g < q; ++g) w_gco[(g * cin + c) * cout + o] = kernel[(o * cin + c) * q + g];
  std::vector<T> out(len * cout);
  std::vector<char> need(len, 1);
  std::vector<double> acc;
  detail::causal_conv(input.data(), len, cin, w_gco.data(), bias.empty() ? nullptr : bias.data(), cout, q, dilation,
                      need, out.data(), acc);
  return out;
}

template <class T>
class Tcn {
 public:
  explicit Tcn(Architecture arch) : arch_(std::move(arch)), layout_(arch_) { compute_needed_steps(); }

  const Architecture& arch() const { return arch_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t param_count() const { return layout_.total; }
  std::size_t input_size() const { return arch_.window * arch_.features; }

  // Kernels derived from a parameter vector, in the layouts the loops want.
  struct Prepared {
    std::span<const T> params;
    struct Block {
      std::vector<T> w1_gco, w1_goc, w2_gco, w2_goc, wd_co, wd_oc;
    };
    std::vector<Block> blocks;
  };

  Prepared prepare(std::span<const T> params) const {
    if (params.size() != layout_.total) throw Error(ErrorKind::ShapeMismatch, "parameter vector size");
    Prepared p;
    p.params = params;
    const std::size_t q = arch_.kernel;
    for (const auto& b : layout_.blocks) {
      typename Prepared::Block pb;
      auto conv = [&](std::size_t v_off, std::size_t g_off, std::size_t cin, std::vector<T>& gco, std::vector<T>& goc) {
        const auto w = weight_norm_kernel<T>(params.subspan(v_off, b.out * cin * q), params.subspan(g_off, b.out), b.out);
        gco.resize(w.size());
        goc.resize(w.size());
        for (std::size_t o = 0; o < b.out; ++o)
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t g = 0; g < q; ++g) {
              const T val = w[(o * cin + c) * q + g];
              gco[(g * cin + c) * b.out + o] = val;
              goc[(g * b.out + o) * cin + c] = val;
            }
      };
      conv(b.v1, b.g1, b.in, pb.w1_gco, pb.w1_goc);
      conv(b.v2, b.g2, b.out, pb.w2_gco, pb.w2_goc);
      if (b.has_down) {
        pb.wd_co.resize(b.out * b.in);
        pb.wd_oc.assign(params.begin() + static_cast<std::ptrdiff_t>(b.wd),
                        params.begin() + static_cast<std::ptrdiff_t>(b.wd + b.out * b.in));
        for (std::size_t o = 0; o < b.out; ++o)
          for (std::size_t c = 0; c < b.in; ++c) pb.wd_co[c * b.out + o] = pb.wd_oc[o * b.in + c];
      }
      p.blocks.push_back(std::move(pb));
    }
    return p;
  }

  // Activations of one sample, kept for the backward pass.
  struct Trace {
    struct Block {
      std::vector<T> pre1, act1, pre2, sum, out, mask1, mask2;
    };
    std::vector<Block> blocks;
    std::span<const T> input;
    std::array<double, 2> output{};
    Mode mode = Mode::Inference;
  };

  // Per-thread scratch for the backward pass.
  struct Scratch {
    std::vector<double> acc, d_out, d_sum, d_pre2, d_act1, d_pre1, d_in;
  };

  // Dropout masks derived only from (seed); identical for any thread layout.
  void draw_masks(Trace& tr, std::uint64_t seed) const {
    const std::size_t len = arch_.window;
    const double keep = 1.0 - arch_.dropout;
    const T scale = static_cast<T>(1.0 / keep);
    std::uint64_t state = detail::splitmix64(seed);
    auto next01 = [&]() {
      state = detail::splitmix64(state);
      return static_cast<double>(state >> 11) * 0x1.0p-53;
    };
    tr.blocks.resize(layout_.blocks.size());
    for (std::size_t m = 0; m < layout_.blocks.size(); ++m) {
      auto& b = tr.blocks[m];
      const std::size_t n = len * layout_.blocks[m].out;
      b.mask1.resize(n);
      b.mask2.resize(n);
      for (auto& v : b.mask1) v = next01() < keep ? scale : T(0);
      for (auto& v : b.mask2) v = next01() < keep ? scale : T(0);
    }
  }

  // Runs one residual block; `need_c1` / `need_out` select the steps computed.
  void block_forward(const Prepared& p, std::size_t m, const T* in, typename Trace::Block& tb, Mode mode,
                     const std::vector<char>& need_c1, const std::vector<char>& need_out,
                     std::vector<double>& acc) const {
    const auto& b = layout_.blocks[m];
    const auto& pb = p.blocks[m];
    const std::size_t len = arch_.window, q = arch_.kernel, h = b.dilation, c = b.out;
    const T* prm = p.params.data();
    const bool drop = mode == Mode::Training && arch_.dropout > 0.0;
    tb.pre1.assign(len * c, T(0));
    tb.act1.assign(len * c, T(0));
    tb.pre2.assign(len * c, T(0));
    tb.sum.assign(len * c, T(0));
    tb.out.assign(len * c, T(0));
    detail::causal_conv(in, len, b.in, pb.w1_gco.data(), prm + b.b1, c, q, h, need_c1, tb.pre1.data(), acc);
    for (std::size_t e = 0; e < len; ++e) {
      if (!need_c1[e]) continue;
      for (std::size_t o = 0; o < c; ++o) {
        const std::size_t i = e * c + o;
        T a = tb.pre1[i] > T(0) ? tb.pre1[i] : T(0);
        if (drop) a *= tb.mask1[i];
        tb.act1[i] = a;
      }
    }
    detail::causal_conv(tb.act1.data(), len, c, pb.w2_gco.data(), prm + b.b2, c, q, h, need_out, tb.pre2.data(), acc);
    std::vector<T> res;
    if (b.has_down) {
      res.assign(len * c, T(0));
      detail::causal_conv(in, len, b.in, pb.wd_co.data(), prm + b.bd, c, 1, 1, need_out, res.data(), acc);
    }
    for (std::size_t e = 0; e < len; ++e) {
      if (!need_out[e]) continue;
      for (std::size_t o = 0; o < c; ++o) {
        const std::size_t i = e * c + o;
        T a = tb.pre2[i] > T(0) ? tb.pre2[i] : T(0);
        if (drop) a *= tb.mask2[i];
        const T r = b.has_down ? res[i] : in[e * b.in + o];
        tb.sum[i] = static_cast<T>(static_cast<double>(a) + static_cast<double>(r));
        tb.out[i] = tb.sum[i] > T(0) ? tb.sum[i] : T(0);
      }
    }
  }

  // One residual block over every step of a window (input: window x block in).
  std::vector<T> residual_block_forward(const Prepared& p, std::size_t m, std::span<const T> input, Mode mode,
                                        std::uint64_t seed = 0) const {
    const auto& b = layout_.blocks.at(m);
    if (input.size() != arch_.window * b.in) throw Error(ErrorKind::ShapeMismatch, "block input shape");
    Trace tr;
    if (mode == Mode::Training) draw_masks(tr, seed);
    tr.blocks.resize(layout_.blocks.size());
    const std::vector<char> all(arch_.window, 1);
    std::vector<double> acc;
    block_forward(p, m, input.data(), tr.blocks[m], mode, all, all, acc);
    return tr.blocks[m].out;
  }

  // Full forward of one sample (input: window x features, normalised).
  // In training mode, call draw_masks first.
  std::array<double, 2> forward(const Prepared& p, std::span<const T> input, Trace& tr, Mode mode,
                                std::vector<double>& acc) const {
    if (input.size() != input_size()) throw Error(ErrorKind::ShapeMismatch, "input must be window x features");
    if (arch_.outputs != 2) throw Error(ErrorKind::ShapeMismatch, "velocity head must have 2 outputs");
    tr.input = input;
    tr.mode = mode;
    tr.blocks.resize(layout_.blocks.size());
    const T* in = input.data();
    for (std::size_t m = 0; m < layout_.blocks.size(); ++m) {
      block_forward(p, m, in, tr.blocks[m], mode, need_c1_[m], need_out_[m], acc);
      in = tr.blocks[m].out.data();
    }
    const std::size_t c = layout_.blocks.back().out;
    const T* last = in + (arch_.window - 1) * c;
    const T* prm = p.params.data();
    for (std::size_t k = 0; k < 2; ++k) {
      double s = static_cast<double>(prm[layout_.head_b + k]);
      for (std::size_t i = 0; i < c; ++i) s += static_cast<double>(prm[layout_.head_w + k * c + i]) * static_cast<double>(last[i]);
      tr.output[k] = static_cast<double>(static_cast<T>(s));
    }
    return tr.output;
  }

  std::array<double, 2> predict(const Prepared& p, std::span<const T> input) const {
    Trace tr;
    std::vector<double> acc;
    return forward(p, input, tr, Mode::Inference, acc);
  }

  // Accumulates d(loss)/d(params) for one traced sample given d(loss)/d(output).
  // Conv weights accumulate in the internal [g][c][o] effective-kernel layout;
  // call finalize_gradient once per batch to map them to (v, g).
  void backward(const Prepared& p, const Trace& tr, std::array<double, 2> d_output, std::span<double> grad,
                Scratch& s) const {
    const std::size_t len = arch_.window, q = arch_.kernel;
    const T* prm = p.params.data();
    const bool drop = tr.mode == Mode::Training && arch_.dropout > 0.0;
    const std::size_t nb = layout_.blocks.size();
    const std::size_t c_last = layout_.blocks.back().out;

    s.d_out.assign(len * c_last, 0.0);
    const T* last = tr.blocks.back().out.data() + (len - 1) * c_last;
    for (std::size_t k = 0; k < 2; ++k) {
      grad[layout_.head_b + k] += d_output[k];
      for (std::size_t i = 0; i < c_last; ++i) {
        grad[layout_.head_w + k * c_last + i] += d_output[k] * static_cast<double>(last[i]);
        s.d_out[(len - 1) * c_last + i] += d_output[k] * static_cast<double>(prm[layout_.head_w + k * c_last + i]);
      }
    }

    for (std::size_t mi = nb; mi-- > 0;) {
      const auto& b = layout_.blocks[mi];
      const auto& pb = p.blocks[mi];
      const auto& tb = tr.blocks[mi];
      const std::size_t c = b.out, h = b.dilation;
      const T* in = mi == 0 ? tr.input.data() : tr.blocks[mi - 1].out.data();
      const auto& need_out = need_out_[mi];
      const auto& need_c1 = need_c1_[mi];

      s.d_sum.assign(len * c, 0.0);
      s.d_pre2.assign(len * c, 0.0);
      for (std::size_t e = 0; e < len; ++e) {
        if (!need_out[e]) continue;
        for (std::size_t o = 0; o < c; ++o) {
          const std::size_t i = e * c + o;
          const double ds = tb.sum[i] > T(0) ? s.d_out[i] : 0.0;
          s.d_sum[i] = ds;
          double dp = tb.pre2[i] > T(0) ? ds : 0.0;
          if (drop) dp *= static_cast<double>(tb.mask2[i]);
          s.d_pre2[i] = dp;
        }
      }
      s.d_in.assign(len * b.in, 0.0);
      // Skip path.
      if (b.has_down) {
        detail::causal_conv_backward(in, len, b.in, pb.wd_oc.data(), c, 1, 1, need_out, s.d_sum.data(),
                                     grad.data() + b.wd, grad.data() + b.bd, s.d_in.data());
      } else {
        for (std::size_t e = 0; e < len; ++e)
          if (need_out[e])
            for (std::size_t o = 0; o < c; ++o) s.d_in[e * b.in + o] += s.d_sum[e * c + o];
      }
      // conv2
      s.d_act1.assign(len * c, 0.0);
      detail::causal_conv_backward(tb.act1.data(), len, c, pb.w2_goc.data(), c, q, h, need_out, s.d_pre2.data(),
                                   grad.data() + b.v2, grad.data() + b.b2, s.d_act1.data());
      s.d_pre1.assign(len * c, 0.0);
      for (std::size_t e = 0; e < len; ++e) {
        if (!need_c1[e]) continue;
        for (std::size_t o = 0; o < c; ++o) {
          const std::size_t i = e * c + o;
          double dp = tb.pre1[i] > T(0) ? s.d_act1[i] : 0.0;
          if (drop) dp *= static_cast<double>(tb.mask1[i]);
          s.d_pre1[i] = dp;
        }
      }
      const bool want_input_grad = mi > 0;
      detail::causal_conv_backward(in, len, b.in, pb.w1_goc.data(), c, q, h, need_c1, s.d_pre1.data(),
                                   grad.data() + b.v1, grad.data() + b.b1, want_input_grad ? s.d_in.data() : nullptr);
      if (want_input_grad) s.d_out.swap(s.d_in);
    }
  }

  // Maps accumulated effective-kernel gradients to weight-norm (v, g) grads.
  void finalize_gradient(std::span<const T> params, std::span<double> grad) const {
    const std::size_t q = arch_.kernel;
    std::vector<double> dw;
    for (const auto& b : layout_.blocks) {
      auto one = [&](std::size_t v_off, std::size_t g_off, std::size_t cin) {
        const std::size_t per = cin * q;
        dw.assign(grad.begin() + static_cast<std::ptrdiff_t>(v_off),
                  grad.begin() + static_cast<std::ptrdiff_t>(v_off + b.out * per));
        for (std::size_t o = 0; o < b.out; ++o) {
          double n2 = 0.0;
          for (std::size_t i = 0; i < per; ++i) {
            const double v = static_cast<double>(params[v_off + o * per + i]);
            n2 += v * v;
          }
          const double n = std::sqrt(n2);
          const double gain = static_cast<double>(params[g_off + o]);
          // dL/dw for (o, c, g) sits at [(g * cin + c) * out + o].
          double gv = 0.0;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t g = 0; g < q; ++g)
              gv += dw[(g * cin + c) * b.out + o] * static_cast<double>(params[v_off + (o * cin + c) * q + g]);
          const double dg = gv / n;
          grad[g_off + o] += dg;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t g = 0; g < q; ++g) {
              const double v = static_cast<double>(params[v_off + (o * cin + c) * q + g]);
              grad[v_off + (o * cin + c) * q + g] = gain / n * dw[(g * cin + c) * b.out + o] - gain * dg / n2 * v;
            }
        }
      };
      one(b.v1, b.g1, b.in);
      one(b.v2, b.g2, b.out);
      if (b.has_down) {
        // Stored as [c][o]; parameters are [o][c].
        dw.assign(grad.begin() + static_cast<std::ptrdiff_t>(b.wd),
                  grad.begin() + static_cast<std::ptrdiff_t>(b.wd + b.out * b.in));
        for (std::size_t o = 0; o < b.out; ++o)
          for (std::size_t c = 0; c < b.in; ++c) grad[b.wd + o * b.in + c] = dw[c * b.out + o];
      }
    }
  }

  // Steps each block must compute for the head's final-step readout.
  const std::vector<char>& needed_outputs(std::size_t block) const { return need_out_[block]; }

 private:
  void compute_needed_steps() {
    const std::size_t len = arch_.window, q = arch_.kernel;
    const std::size_t nb = arch_.channels.size();
    need_out_.assign(nb, std::vector<char>(len, 0));
    need_c1_.assign(nb, std::vector<char>(len, 0));
    std::vector<char> need(len, 0);
    need[len - 1] = 1;
    for (std::size_t mi = nb; mi-- > 0;) {
      const std::size_t h = arch_.dilations[mi];
      need_out_[mi] = need;
      auto& c1 = need_c1_[mi];
      for (std::size_t e = 0; e < len; ++e)
        if (need[e])
          for (std::size_t g = 0; g < q && h * g <= e; ++g) c1[e - h * g] = 1;
      std::vector<char> in_need = need;  // skip path reads the same steps
      for (std::size_t e = 0; e < len; ++e)
        if (c1[e])
          for (std::size_t g = 0; g < q && h * g <= e; ++g) in_need[e - h * g] = 1;
      need = in_need;
    }
  }

  Architecture arch_;
  ParamLayout layout_;
  std::vector<std::vector<char>> need_out_, need_c1_;
};

// Mean Euclidean norm of the residuals.
inline double norm_loss(std::span<const std::array<double, 2>> predicted, std::span<const std::array<double, 2>> target) {
  if (predicted.empty()) throw Error(ErrorKind::EmptyBatch, "loss over an empty batch");
  if (predicted.size() != target.size()) throw Error(ErrorKind::ShapeMismatch, "prediction/target count");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    s += std::hypot(predicted[i][0] - target[i][0], predicted[i][1] - target[i][1]);
  return s / static_cast<double>(predicted.size());
}

// Subgradient of one sample's ||r|| / batch: r / max(||r||, 1e-8) / batch.
inline std::array<double, 2> norm_loss_grad(std::array<double, 2> predicted, std::array<double, 2> target,
                                            std::size_t batch) {
  const double rx = predicted[0] - target[0], ry = predicted[1] - target[1];
  const double n = std::max(std::hypot(rx, ry), 1e-8);
  const double scale = 1.0 / (n * static_cast<double>(batch));
  return {rx * scale, ry * scale};
}

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<T> m, v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, T(0)), v(n, T(0)) {}
};

template <class T>
void adam_step(std::span<T> params, std::span<const double> grad, AdamState<T>& st, const AdamConfig& cfg) {
  if (grad.size() != params.size() || st.m.size() != params.size() || st.v.size() != params.size())
    throw Error(ErrorKind::ShapeMismatch, "adam: parameter/gradient/moment sizes differ");
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    const double m = cfg.beta1 * static_cast<double>(st.m[i]) + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * static_cast<double>(st.v[i]) + (1.0 - cfg.beta2) * g * g;
    st.m[i] = static_cast<T>(m);
    st.v[i] = static_cast<T>(v);
    const double mhat = m / c1;
    const double vhat = v / c2;
    params[i] = static_cast<T>(static_cast<double>(params[i]) - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
  }
}

// Uniform(+-1/sqrt(fan_in)) directions and head weights, gains equal to the
// initial direction norms, zero biases.
template <class T>
std::vector<T> initialize_params(const Architecture& arch, std::uint64_t seed) {
  const ParamLayout layout(arch);
  std::vector<T> p(layout.total, T(0));
  std::uint64_t state = detail::splitmix64(seed ^ 0x5eedULL);
  auto uniform = [&](double bound) {
    state = detail::splitmix64(state);
    const double u = static_cast<double>(state >> 11) * 0x1.0p-53;
    return static_cast<T>((2.0 * u - 1.0) * bound);
  };
  const std::size_t q = arch.kernel;
  for (const auto& b : layout.blocks) {
    auto conv = [&](std::size_t v_off, std::size_t g_off, std::size_t cin) {
      const std::size_t per = cin * q;
      const double bound = 1.0 / std::sqrt(static_cast<double>(per));
      for (std::size_t o = 0; o < b.out; ++o) {
        double n2 = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
          const T v = uniform(bound);
          p[v_off + o * per + i] = v;
          n2 += static_cast<double>(v) * static_cast<double>(v);
        }
        p[g_off + o] = static_cast<T>(std::sqrt(n2));
      }
    };
    conv(b.v1, b.g1, b.in);
    conv(b.v2, b.g2, b.out);
    if (b.has_down) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(b.in));
      for (std::size_t i = 0; i < b.out * b.in; ++i) p[b.wd + i] = uniform(bound);
    }
  }
  const std::size_t c = layout.blocks.back().out;
  const double bound = 1.0 / std::sqrt(static_cast<double>(c));
  for (std::size_t i = 0; i < arch.outputs * c; ++i) p[layout.head_w + i] = uniform(bound);
  return p;
}

}  // namespace vidsim
