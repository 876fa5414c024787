#include "relnet/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relnet/param_store.hpp"

namespace relnet {

namespace {

template <class F>
decltype(auto) for_dtype(DType dt, F&& f) {
  if (dt == DType::f32) return f.template operator()<float>();
  return f.template operator()<double>();
}

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, int64_t M, int64_t N, int64_t K) {
  for (int64_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + k * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, int64_t M, int64_t N, int64_t K) {
  for (int64_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    for (int64_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T acc = 0;
      for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
      C[i * N + j] += acc;
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, int64_t M, int64_t N, int64_t K) {
  for (int64_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    const T* b = B + i * N;
    for (int64_t k = 0; k < K; ++k) {
      const T av = a[k];
      T* c = C + k * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// One image Ci x H x W -> (Ci*kh*kw) x (Ho*Wo)
template <typename T>
void im2col(const T* x, T* cols, int64_t Ci, int64_t H, int64_t W, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t Ho, int64_t Wo) {
  const int64_t cols_w = Ho * Wo;
  for (int64_t ci = 0; ci < Ci; ++ci) {
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        T* row = cols + ((ci * kh + ky) * kw + kx) * cols_w;
        for (int64_t py = 0; py < Ho; ++py) {
          const int64_t sy = py * stride - pad + ky;
          if (sy < 0 || sy >= H) {
            for (int64_t px = 0; px < Wo; ++px) row[py * Wo + px] = 0;
            continue;
          }
          const T* src = x + (ci * H + sy) * W;
          for (int64_t px = 0; px < Wo; ++px) {
            const int64_t sx = px * stride - pad + kx;
            row[py * Wo + px] = (sx >= 0 && sx < W) ? src[sx] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, T* x, int64_t Ci, int64_t H, int64_t W, int64_t kh,
                int64_t kw, int64_t stride, int64_t pad, int64_t Ho, int64_t Wo) {
  const int64_t cols_w = Ho * Wo;
  for (int64_t ci = 0; ci < Ci; ++ci) {
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        const T* row = cols + ((ci * kh + ky) * kw + kx) * cols_w;
        for (int64_t py = 0; py < Ho; ++py) {
          const int64_t sy = py * stride - pad + ky;
          if (sy < 0 || sy >= H) continue;
          T* dst = x + (ci * H + sy) * W;
          for (int64_t px = 0; px < Wo; ++px) {
            const int64_t sx = px * stride - pad + kx;
            if (sx >= 0 && sx < W) dst[sx] += row[py * Wo + px];
          }
        }
      }
    }
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

std::vector<int64_t> conv_out_shape(const std::vector<int64_t>& xs,
                                    const std::vector<int64_t>& ks, int64_t stride,
                                    int64_t pad) {
  require(xs.size() == 4, "conv2d input must be rank 4, got " + shape_to_string(xs));
  require(ks.size() == 4, "conv2d kernel must be rank 4, got " + shape_to_string(ks));
  require(xs[1] == ks[1], "conv2d channel mismatch: input " + shape_to_string(xs) +
                              " vs kernel " + shape_to_string(ks));
  require(stride >= 1, "conv2d stride must be >= 1");
  require(pad >= 0, "conv2d padding must be >= 0");
  const int64_t H = xs[2], W = xs[3], kh = ks[2], kw = ks[3];
  require(H + 2 * pad >= kh && W + 2 * pad >= kw,
          "conv2d kernel " + shape_to_string(ks) + " larger than padded input " +
              shape_to_string(xs) + " (pad " + std::to_string(pad) + ")");
  const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  return {xs[0], ks[0], Ho, Wo};
}

int64_t pair_rows(int64_t K, bool include_self) { return include_self ? K * K : K * K - K; }

}  // namespace

NodeId Tape::push(Node n) {
  if (finite_checks_enabled() && !n.value.all_finite())
    throw VerificationError("non-finite value produced by tape op kind " +
                            std::to_string(static_cast<int>(n.kind)));
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value, std::string name) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Tape::param(const ParamStore& store, const std::string& name) {
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) return it->second;
  NodeId id = leaf(store.get(name), name);
  param_nodes_.emplace(name, id);
  return id;
}

// Shared forward evaluation; record and replay both go through here so a
// replayed tape reproduces recorded values bit-exactly.
static Tensor eval_node(const Node& n, const std::vector<const Tensor*>& in) {
  switch (n.kind) {
    case OpKind::kLeaf:
      return n.value;

    case OpKind::kLinear: {
      const Tensor& x = *in[0];
      const Tensor& w = *in[1];
      const bool has_bias = in.size() > 2;
      require(x.rank() == 2 && w.rank() == 2,
              "linear expects rank-2 x and W, got " + x.shape_str() + " and " +
                  w.shape_str());
      require(x.dim(1) == w.dim(1), "linear shape mismatch: x " + x.shape_str() +
                                        " vs W " + w.shape_str());
      const int64_t B = x.dim(0), di = x.dim(1), dout = w.dim(0);
      if (has_bias)
        require(in[2]->rank() == 1 && in[2]->dim(0) == dout,
                "linear bias " + in[2]->shape_str() + " does not match W " +
                    w.shape_str());
      Tensor y = Tensor::zeros({B, dout}, x.dtype());
      for_dtype(x.dtype(), [&]<typename T>() {
        T* yp = y.data<T>();
        if (has_bias) {
          const T* bp = in[2]->data<T>();
          for (int64_t i = 0; i < B; ++i)
            for (int64_t j = 0; j < dout; ++j) yp[i * dout + j] = bp[j];
        }
        gemm_nt(x.data<T>(), w.data<T>(), yp, B, dout, di);
      });
      return y;
    }

    case OpKind::kConv2d: {
      const Tensor& x = *in[0];
      const Tensor& k = *in[1];
      const int64_t stride = n.iattrs[0], pad = n.iattrs[1];
      auto os = conv_out_shape(x.shape(), k.shape(), stride, pad);
      const int64_t B = os[0], Co = os[1], Ho = os[2], Wo = os[3];
      const int64_t Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
      const int64_t kh = k.dim(2), kw = k.dim(3), ckk = Ci * kh * kw;
      Tensor y = Tensor::zeros(os, x.dtype());
      for_dtype(x.dtype(), [&]<typename T>() {
        std::vector<T> cols(static_cast<size_t>(ckk * Ho * Wo));
        const T* xp = x.data<T>();
        T* yp = y.data<T>();
        for (int64_t bi = 0; bi < B; ++bi) {
          im2col(xp + bi * Ci * H * W, cols.data(), Ci, H, W, kh, kw, stride, pad, Ho,
                 Wo);
          gemm_nn(k.data<T>(), cols.data(), yp + bi * Co * Ho * Wo, Co, Ho * Wo, ckk);
        }
      });
      return y;
    }

    case OpKind::kBiasChannel: {
      const Tensor& x = *in[0];
      const Tensor& b = *in[1];
      require(x.rank() == 4 && b.rank() == 1 && b.dim(0) == x.dim(1),
              "bias_channel mismatch: x " + x.shape_str() + " vs b " + b.shape_str());
      Tensor y = Tensor::zeros(x.shape(), x.dtype());
      const int64_t B = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
      for_dtype(x.dtype(), [&]<typename T>() {
        const T* xp = x.data<T>();
        const T* bp = b.data<T>();
        T* yp = y.data<T>();
        for (int64_t bi = 0; bi < B; ++bi)
          for (int64_t c = 0; c < C; ++c) {
            const T bv = bp[c];
            const int64_t base = (bi * C + c) * hw;
            for (int64_t i = 0; i < hw; ++i) yp[base + i] = xp[base + i] + bv;
          }
      });
      return y;
    }

    case OpKind::kRelu:
    case OpKind::kSigmoid:
    case OpKind::kTanh: {
      const Tensor& x = *in[0];
      Tensor y = Tensor::zeros(x.shape(), x.dtype());
      for_dtype(x.dtype(), [&]<typename T>() {
        const T* xp = x.data<T>();
        T* yp = y.data<T>();
        const int64_t sz = x.size();
        if (n.kind == OpKind::kRelu)
          for (int64_t i = 0; i < sz; ++i) yp[i] = xp[i] > 0 ? xp[i] : T(0);
        else if (n.kind == OpKind::kSigmoid)
          for (int64_t i = 0; i < sz; ++i) yp[i] = stable_sigmoid(xp[i]);
        else
          for (int64_t i = 0; i < sz; ++i) yp[i] = std::tanh(xp[i]);
      });
      return y;
    }

    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      const Tensor& x = *in[0];
      const Tensor& y2 = *in[1];
      require(x.same_shape(y2), "elementwise shape mismatch: " + x.shape_str() +
                                    " vs " + y2.shape_str());
      Tensor y = Tensor::zeros(x.shape(), x.dtype());
      for_dtype(x.dtype(), [&]<typename T>() {
        const T* a = x.data<T>();
        const T* b = y2.data<T>();
        T* yp = y.data<T>();
        const int64_t sz = x.size();
        if (n.kind == OpKind::kAdd)
          for (int64_t i = 0; i < sz; ++i) yp[i] = a[i] + b[i];
        else if (n.kind == OpKind::kSub)
          for (int64_t i = 0; i < sz; ++i) yp[i] = a[i] - b[i];
        else
          for (int64_t i = 0; i < sz; ++i) yp[i] = a[i] * b[i];
      });
      return y;
    }

    case OpKind::kAffine: {
      const Tensor& x = *in[0];
      Tensor y = Tensor::zeros(x.shape(), x.dtype());
      for_dtype(x.dtype(), [&]<typename T>() {
        const T a = static_cast<T>(n.a), b = static_cast<T>(n.b);
        const T* xp = x.data<T>();
        T* yp = y.data<T>();
        for (int64_t i = 0; i < x.size(); ++i) yp[i] = a * xp[i] + b;
      });
      return y;
    }

    case OpKind::kPermute: {
      const Tensor& x = *in[0];
      const auto& axes = n.iattrs;
      require(axes.size() == x.rank(), "permute axes rank mismatch");
      const size_t r = x.rank();
      std::vector<int64_t> out_shape(r), in_strides(r), map_strides(r);
      int64_t s = 1;
      for (size_t i = r; i-- > 0;) {
        in_strides[i] = s;
        s *= x.dim(i);
      }
      for (size_t i = 0; i < r; ++i) {
        out_shape[i] = x.dim(static_cast<size_t>(axes[i]));
        map_strides[i] = in_strides[static_cast<size_t>(axes[i])];
      }
      Tensor y = Tensor::zeros(out_shape, x.dtype());
      for_dtype(x.dtype(), [&]<typename T>() {
        const T* xp = x.data<T>();
        T* yp = y.data<T>();
        std::vector<int64_t> idx(r, 0);
        for (int64_t o = 0; o < y.size(); ++o) {
          int64_t src = 0;
          for (size_t i = 0; i < r; ++i) src += idx[i] * map_strides[i];
          yp[o] = xp[src];
          for (size_t i = r; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
          }
        }
      });
      return y;
    }

    case OpKind::kReshape:
      return in[0]->reshaped(n.iattrs);

    case OpKind::kRowSum: {
      const Tensor& x = *in[0];
      require(x.rank() == 2, "row_sum expects rank 2, got " + x.shape_str());
      const int64_t R = x.dim(0), C = x.dim(1);
      Tensor y = Tensor::zeros({C}, x.dtype());
      // double accumulators keep the column sums insensitive to row order
      std::vector<double> acc(static_cast<size_t>(C), 0.0);
      for_dtype(x.dtype(), [&]<typename T>() {
        const T* xp = x.data<T>();
        for (int64_t r = 0; r < R; ++r)
          for (int64_t c = 0; c < C; ++c)
            acc[static_cast<size_t>(c)] += static_cast<double>(xp[r * C + c]);
        T* yp = y.data<T>();
        for (int64_t c = 0; c < C; ++c) yp[c] = static_cast<T>(acc[static_cast<size_t>(c)]);
      });
      return y;
    }

    case OpKind::kSumAll: {
      const Tensor& x = *in[0];
      Tensor y = Tensor::zeros({1}, x.dtype());
      for_dtype(x.dtype(), [&]<typename T>() {
        const T* xp = x.data<T>();
        T acc = 0;
        for (int64_t i = 0; i < x.size(); ++i) acc += xp[i];
        y.data<T>()[0] = acc;
      });
      return y;
    }

    case OpKind::kConcat0: {
      int64_t total = 0;
      for (const Tensor* t : in) {
        require(t->rank() == 1, "concat0 expects rank-1 inputs, got " + t->shape_str());
        total += t->size();
      }
      Tensor y = Tensor::zeros({total}, in[0]->dtype());
      for_dtype(y.dtype(), [&]<typename T>() {
        T* yp = y.data<T>();
        int64_t off = 0;
        for (const Tensor* t : in) {
          const T* tp = t->data<T>();
          for (int64_t i = 0; i < t->size(); ++i) yp[off + i] = tp[i];
          off += t->size();
        }
      });
      return y;
    }

    case OpKind::kSliceRow: {
      const Tensor& x = *in[0];
      require(x.rank() == 2, "slice_row expects rank 2, got " + x.shape_str());
      const int64_t row = n.iattrs[0], C = x.dim(1);
      require(row >= 0 && row < x.dim(0), "slice_row index out of range");
      Tensor y = Tensor::zeros({1, C}, x.dtype());
      for_dtype(x.dtype(), [&]<typename T>() {
        const T* xp = x.data<T>() + row * C;
        T* yp = y.data<T>();
        for (int64_t i = 0; i < C; ++i) yp[i] = xp[i];
      });
      return y;
    }

    case OpKind::kPairConcat: {
      const Tensor& cells = *in[0];
      const Tensor& q = *in[1];
      require(cells.rank() == 2, "pair_concat cells must be rank 2, got " +
                                     cells.shape_str());
      require(q.rank() == 1, "pair_concat q must be rank 1, got " + q.shape_str());
      const bool include_self = n.iattrs[0] != 0;
      const int64_t K = cells.dim(0), c = cells.dim(1), dq = q.dim(0);
      const int64_t P = pair_rows(K, include_self), width = 2 * c + dq;
      Tensor y = Tensor::zeros({P, width}, cells.dtype());
      for_dtype(cells.dtype(), [&]<typename T>() {
        const T* cp = cells.data<T>();
        const T* qp = q.data<T>();
        T* yp = y.data<T>();
        int64_t r = 0;
        for (int64_t m = 0; m < K; ++m)
          for (int64_t nn = 0; nn < K; ++nn) {
            if (!include_self && m == nn) continue;
            T* row = yp + r * width;
            for (int64_t i = 0; i < c; ++i) row[i] = cp[m * c + i];
            for (int64_t i = 0; i < c; ++i) row[c + i] = cp[nn * c + i];
            for (int64_t i = 0; i < dq; ++i) row[2 * c + i] = qp[i];
            ++r;
          }
      });
      return y;
    }

    case OpKind::kBceLogits: {
      const Tensor& l = *in[0];
      const Tensor& labels = n.payload;
      require(l.rank() == 1, "bce expects rank-1 logits, got " + l.shape_str());
      require(labels.size() == l.size(), "bce logits " + l.shape_str() +
                                             " vs labels " + labels.shape_str());
      for (int64_t i = 0; i < labels.size(); ++i) {
        const double v = labels.at(i);
        require(v == 0.0 || v == 1.0,
                "bce labels must be exactly 0 or 1, got " + std::to_string(v) +
                    " at index " + std::to_string(i));
      }
      Tensor y = Tensor::zeros(l.shape(), l.dtype());
      for_dtype(l.dtype(), [&]<typename T>() {
        const T* lp = l.data<T>();
        T* yp = y.data<T>();
        for (int64_t i = 0; i < l.size(); ++i) {
          const T li = lp[i];
          const T yi = static_cast<T>(labels.at(i));
          yp[i] = std::max(li, T(0)) - li * yi + std::log1p(std::exp(-std::abs(li)));
        }
      });
      return y;
    }
  }
  throw ValidationError("unknown op kind");
}

NodeId Tape::record(Node n) {
  std::vector<const Tensor*> in;
  in.reserve(n.inputs.size());
  for (NodeId i : n.inputs) in.push_back(&nodes_[static_cast<size_t>(i)].value);
  n.value = eval_node(n, in);
  return push(std::move(n));
}

NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
  Node n;
    n.kind = OpKind::kLinear;
    n.inputs = b == kNoBias ? std::vector<NodeId>{x, w} : std::vector<NodeId>{x, w, b};
  return record(std::move(n));
}

NodeId Tape::conv2d(NodeId x, NodeId k, int64_t stride, int64_t padding) {
  Node n;
    n.kind = OpKind::kConv2d;
    n.inputs = {x, k};
    n.iattrs = {stride, padding};
  return record(std::move(n));
}

NodeId Tape::bias_channel(NodeId x, NodeId b) {
  Node n;
    n.kind = OpKind::kBiasChannel;
    n.inputs = {x, b};
  return record(std::move(n));
}

NodeId Tape::relu(NodeId x) {
  Node n;
    n.kind = OpKind::kRelu;
    n.inputs = {x};
  return record(std::move(n));
}

NodeId Tape::sigmoid(NodeId x) {
  Node n;
    n.kind = OpKind::kSigmoid;
    n.inputs = {x};
  return record(std::move(n));
}

NodeId Tape::tanh_(NodeId x) {
  Node n;
    n.kind = OpKind::kTanh;
    n.inputs = {x};
  return record(std::move(n));
}

NodeId Tape::add(NodeId x, NodeId y) {
  Node n;
    n.kind = OpKind::kAdd;
    n.inputs = {x, y};
  return record(std::move(n));
}

NodeId Tape::sub(NodeId x, NodeId y) {
  Node n;
    n.kind = OpKind::kSub;
    n.inputs = {x, y};
  return record(std::move(n));
}

NodeId Tape::mul(NodeId x, NodeId y) {
  Node n;
    n.kind = OpKind::kMul;
    n.inputs = {x, y};
  return record(std::move(n));
}

NodeId Tape::affine(NodeId x, double a, double b) {
  Node n;
    n.kind = OpKind::kAffine;
    n.inputs = {x};
    n.a = a;
    n.b = b;
  return record(std::move(n));
}

NodeId Tape::permute(NodeId x, std::vector<int64_t> axes) {
  Node n;
    n.kind = OpKind::kPermute;
    n.inputs = {x};
    n.iattrs = std::move(axes);
  return record(std::move(n));
}

NodeId Tape::reshape(NodeId x, std::vector<int64_t> shape) {
  Node n;
    n.kind = OpKind::kReshape;
    n.inputs = {x};
    n.iattrs = std::move(shape);
  return record(std::move(n));
}

NodeId Tape::row_sum(NodeId x) {
  Node n;
    n.kind = OpKind::kRowSum;
    n.inputs = {x};
  return record(std::move(n));
}

NodeId Tape::sum_all(NodeId x) {
  Node n;
    n.kind = OpKind::kSumAll;
    n.inputs = {x};
  return record(std::move(n));
}

NodeId Tape::concat0(const std::vector<NodeId>& xs) {
  require(!xs.empty(), "concat0 needs at least one input");
  Node n;
    n.kind = OpKind::kConcat0;
    n.inputs = xs;
  return record(std::move(n));
}

NodeId Tape::slice_row(NodeId x, int64_t row) {
  Node n;
    n.kind = OpKind::kSliceRow;
    n.inputs = {x};
    n.iattrs = {row};
  return record(std::move(n));
}

NodeId Tape::pair_concat(NodeId cells, NodeId q, bool include_self) {
  Node n;
    n.kind = OpKind::kPairConcat;
    n.inputs = {cells, q};
    n.iattrs = {include_self ? int64_t(1) : int64_t(0)};
  return record(std::move(n));
}

NodeId Tape::bce_with_logits(NodeId logits, Tensor labels) {
  Node n;
    n.kind = OpKind::kBceLogits;
    n.inputs = {logits};
    n.payload = std::move(labels);
  return record(std::move(n));
}

std::vector<Tensor> Tape::replay() const {
  std::vector<Tensor> vals(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) {
    std::vector<const Tensor*> in;
    in.reserve(nodes_[i].inputs.size());
    for (NodeId id : nodes_[i].inputs) in.push_back(&vals[static_cast<size_t>(id)]);
    vals[i] = eval_node(nodes_[i], in);
  }
  return vals;
}

namespace {
Tensor& grad_slot(std::vector<Tensor>& grads, NodeId id, const Tensor& like) {
  Tensor& g = grads[static_cast<size_t>(id)];
  if (!g.defined()) g = Tensor::zeros(like.shape(), like.dtype());
  return g;
}

template <typename T>
void axpy(const T* src, T* dst, int64_t n2) {
  for (int64_t i = 0; i < n2; ++i) dst[i] += src[i];
}
}  // namespace

std::vector<Tensor> Tape::backward_all(NodeId loss) const {
  const Tensor& lv = value(loss);
  if (lv.size() != 1)
    throw ValidationError("backward requires a scalar loss node, got " +
                          lv.shape_str());
  std::vector<Tensor> grads(nodes_.size());
  grads[static_cast<size_t>(loss)] = Tensor::full(lv.shape(), 1.0, lv.dtype());

  for (NodeId id = loss; id >= 0; --id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    const Tensor& dy = grads[static_cast<size_t>(id)];
    if (!dy.defined() || n.kind == OpKind::kLeaf) continue;
    const auto inv = [&](size_t i) -> const Tensor& {
      return nodes_[static_cast<size_t>(n.inputs[i])].value;
    };
    switch (n.kind) {
      case OpKind::kLeaf:
        break;

      case OpKind::kLinear: {
        const Tensor& x = inv(0);
        const Tensor& w = inv(1);
        const int64_t B = x.dim(0), di = x.dim(1), dout = w.dim(0);
        Tensor& dx = grad_slot(grads, n.inputs[0], x);
        Tensor& dw = grad_slot(grads, n.inputs[1], w);
        for_dtype(x.dtype(), [&]<typename T>() {
          gemm_nn(dy.data<T>(), w.data<T>(), dx.data<T>(), B, di, dout);
          gemm_tn(dy.data<T>(), x.data<T>(), dw.data<T>(), B, di, dout);
          if (n.inputs.size() > 2) {
            Tensor& db = grad_slot(grads, n.inputs[2], inv(2));
            T* dbp = db.data<T>();
            const T* dyp = dy.data<T>();
            for (int64_t i = 0; i < B; ++i)
              for (int64_t j = 0; j < dout; ++j) dbp[j] += dyp[i * dout + j];
          }
        });
        break;
      }

      case OpKind::kConv2d: {
        const Tensor& x = inv(0);
        const Tensor& k = inv(1);
        const int64_t stride = n.iattrs[0], pad = n.iattrs[1];
        const int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
        const int64_t Co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
        const int64_t Ho = n.value.dim(2), Wo = n.value.dim(3), ckk = Ci * kh * kw;
        Tensor& dx = grad_slot(grads, n.inputs[0], x);
        Tensor& dk = grad_slot(grads, n.inputs[1], k);
        for_dtype(x.dtype(), [&]<typename T>() {
          std::vector<T> cols(static_cast<size_t>(ckk * Ho * Wo));
          std::vector<T> dcols(static_cast<size_t>(ckk * Ho * Wo));
          const T* xp = x.data<T>();
          const T* dyp = dy.data<T>();
          for (int64_t bi = 0; bi < B; ++bi) {
            im2col(xp + bi * Ci * H * W, cols.data(), Ci, H, W, kh, kw, stride, pad,
                   Ho, Wo);
            // dk += dy_b * cols^T
            gemm_nt(dyp + bi * Co * Ho * Wo, cols.data(), dk.data<T>(), Co, ckk,
                    Ho * Wo);
            // dcols = k^T * dy_b, then scatter back
            std::fill(dcols.begin(), dcols.end(), T(0));
            gemm_tn(k.data<T>(), dyp + bi * Co * Ho * Wo, dcols.data(), Co, Ho * Wo,
                    ckk);
            col2im_add(dcols.data(), dx.data<T>() + bi * Ci * H * W, Ci, H, W, kh, kw,
                       stride, pad, Ho, Wo);
          }
        });
        break;
      }

      case OpKind::kBiasChannel: {
        const Tensor& x = inv(0);
        Tensor& dx = grad_slot(grads, n.inputs[0], x);
        Tensor& db = grad_slot(grads, n.inputs[1], inv(1));
        const int64_t B = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
        for_dtype(x.dtype(), [&]<typename T>() {
          axpy(dy.data<T>(), dx.data<T>(), x.size());
          T* dbp = db.data<T>();
          const T* dyp = dy.data<T>();
          for (int64_t bi = 0; bi < B; ++bi)
            for (int64_t c = 0; c < C; ++c) {
              const int64_t base = (bi * C + c) * hw;
              T acc = 0;
              for (int64_t i = 0; i < hw; ++i) acc += dyp[base + i];
              dbp[c] += acc;
            }
        });
        break;
      }

      case OpKind::kRelu: {
        Tensor& dx = grad_slot(grads, n.inputs[0], inv(0));
        for_dtype(dy.dtype(), [&]<typename T>() {
          const T* yp = n.value.data<T>();
          const T* dyp = dy.data<T>();
          T* dxp = dx.data<T>();
          for (int64_t i = 0; i < dy.size(); ++i)
            if (yp[i] > 0) dxp[i] += dyp[i];
        });
        break;
      }

      case OpKind::kSigmoid: {
        Tensor& dx = grad_slot(grads, n.inputs[0], inv(0));
        for_dtype(dy.dtype(), [&]<typename T>() {
          const T* yp = n.value.data<T>();
          const T* dyp = dy.data<T>();
          T* dxp = dx.data<T>();
          for (int64_t i = 0; i < dy.size(); ++i)
            dxp[i] += dyp[i] * yp[i] * (T(1) - yp[i]);
        });
        break;
      }

      case OpKind::kTanh: {
        Tensor& dx = grad_slot(grads, n.inputs[0], inv(0));
        for_dtype(dy.dtype(), [&]<typename T>() {
          const T* yp = n.value.data<T>();
          const T* dyp = dy.data<T>();
          T* dxp = dx.data<T>();
          for (int64_t i = 0; i < dy.size(); ++i)
            dxp[i] += dyp[i] * (T(1) - yp[i] * yp[i]);
        });
        break;
      }

      case OpKind::kAdd:
      case OpKind::kSub: {
        Tensor& dx = grad_slot(grads, n.inputs[0], inv(0));
        Tensor& dy2 = grad_slot(grads, n.inputs[1], inv(1));
        for_dtype(dy.dtype(), [&]<typename T>() {
          axpy(dy.data<T>(), dx.data<T>(), dy.size());
          const T* dyp = dy.data<T>();
          T* d2 = dy2.data<T>();
          if (n.kind == OpKind::kAdd)
            for (int64_t i = 0; i < dy.size(); ++i) d2[i] += dyp[i];
          else
            for (int64_t i = 0; i < dy.size(); ++i) d2[i] -= dyp[i];
        });
        break;
      }

      case OpKind::kMul: {
        Tensor& dx = grad_slot(grads, n.inputs[0], inv(0));
        Tensor& dy2 = grad_slot(grads, n.inputs[1], inv(1));
        for_dtype(dy.dtype(), [&]<typename T>() {
          const T* a = inv(0).data<T>();
          const T* b = inv(1).data<T>();
          const T* dyp = dy.data<T>();
          T* dxp = dx.data<T>();
          T* d2 = dy2.data<T>();
          for (int64_t i = 0; i < dy.size(); ++i) {
            dxp[i] += dyp[i] * b[i];
            d2[i] += dyp[i] * a[i];
          }
        });
        break;
      }

      case OpKind::kAffine: {
        Tensor& dx = grad_slot(grads, n.inputs[0], inv(0));
        for_dtype(dy.dtype(), [&]<typename T>() {
          const T a = static_cast<T>(n.a);
          const T* dyp = dy.data<T>();
          T* dxp = dx.data<T>();
          for (int64_t i = 0; i < dy.size(); ++i) dxp[i] += a * dyp[i];
        });
        break;
      }

      case OpKind::kPermute: {
        const Tensor& x = inv(0);
        Tensor& dx = grad_slot(grads, n.inputs[0], x);
        const auto& axes = n.iattrs;
        const size_t r = x.rank();
        std::vector<int64_t> in_strides(r), map_strides(r);
        int64_t s = 1;
        for (size_t i = r; i-- > 0;) {
          in_strides[i] = s;
          s *= x.dim(i);
        }
        for (size_t i = 0; i < r; ++i)
          map_strides[i] = in_strides[static_cast<size_t>(axes[i])];
        for_dtype(dy.dtype(), [&]<typename T>() {
          const T* dyp = dy.data<T>();
          T* dxp = dx.data<T>();
          std::vector<int64_t> idx(r, 0);
          for (int64_t o = 0; o < dy.size(); ++o) {
            int64_t src = 0;
            for (size_t i = 0; i < r; ++i) src += idx[i] * map_strides[i];
            dxp[src] += dyp[o];
            for (size_t i = r; i-- > 0;) {
              if (++idx[i] < n.value.dim(i)) break;
              idx[i] = 0;
            }
          }
        });
        break;
      }

      case OpKind::kReshape: {
        const Tensor& x = inv(0);
        Tensor& dx = grad_slot(grads, n.inputs[0], x);
        for_dtype(dy.dtype(), [&]<typename T>() {
          axpy(dy.data<T>(), dx.data<T>(), dy.size());
        });
        break;
      }

      case OpKind::kRowSum: {
        const Tensor& x = inv(0);
        Tensor& dx = grad_slot(grads, n.inputs[0], x);
        const int64_t R = x.dim(0), C = x.dim(1);
        for_dtype(dy.dtype(), [&]<typename T>() {
          const T* dyp = dy.data<T>();
          T* dxp = dx.data<T>();
          for (int64_t r2 = 0; r2 < R; ++r2)
            for (int64_t c = 0; c < C; ++c) dxp[r2 * C + c] += dyp[c];
        });
        break;
      }

      case OpKind::kSumAll: {
        const Tensor& x = inv(0);
        Tensor& dx = grad_slot(grads, n.inputs[0], x);
        for_dtype(dy.dtype(), [&]<typename T>() {
          const T g = dy.data<T>()[0];
          T* dxp = dx.data<T>();
          for (int64_t i = 0; i < x.size(); ++i) dxp[i] += g;
        });
        break;
      }

      case OpKind::kConcat0: {
        int64_t off = 0;
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          const Tensor& x = inv(i);
          Tensor& dx = grad_slot(grads, n.inputs[i], x);
          for_dtype(dy.dtype(), [&]<typename T>() {
            const T* dyp = dy.data<T>() + off;
            T* dxp = dx.data<T>();
            for (int64_t j = 0; j < x.size(); ++j) dxp[j] += dyp[j];
          });
          off += x.size();
        }
        break;
      }

      case OpKind::kSliceRow: {
        const Tensor& x = inv(0);
        Tensor& dx = grad_slot(grads, n.inputs[0], x);
        const int64_t row = n.iattrs[0], C = x.dim(1);
        for_dtype(dy.dtype(), [&]<typename T>() {
          const T* dyp = dy.data<T>();
          T* dxp = dx.data<T>() + row * C;
          for (int64_t i = 0; i < C; ++i) dxp[i] += dyp[i];
        });
        break;
      }

      case OpKind::kPairConcat: {
        const Tensor& cells = inv(0);
        const Tensor& q = inv(1);
        Tensor& dc = grad_slot(grads, n.inputs[0], cells);
        Tensor& dq = grad_slot(grads, n.inputs[1], q);
        const bool include_self = n.iattrs[0] != 0;
        const int64_t K = cells.dim(0), c = cells.dim(1), dqn = q.dim(0);
        const int64_t width = 2 * c + dqn;
        for_dtype(dy.dtype(), [&]<typename T>() {
          const T* dyp = dy.data<T>();
          T* dcp = dc.data<T>();
          T* dqp = dq.data<T>();
          int64_t r = 0;
          for (int64_t m = 0; m < K; ++m)
            for (int64_t nn = 0; nn < K; ++nn) {
              if (!include_self && m == nn) continue;
              const T* row = dyp + r * width;
              for (int64_t i = 0; i < c; ++i) dcp[m * c + i] += row[i];
              for (int64_t i = 0; i < c; ++i) dcp[nn * c + i] += row[c + i];
              for (int64_t i = 0; i < dqn; ++i) dqp[i] += row[2 * c + i];
              ++r;
            }
        });
        break;
      }

      case OpKind::kBceLogits: {
        const Tensor& l = inv(0);
        Tensor& dl = grad_slot(grads, n.inputs[0], l);
        for_dtype(dy.dtype(), [&]<typename T>() {
          const T* lp = l.data<T>();
          const T* dyp = dy.data<T>();
          T* dlp = dl.data<T>();
          for (int64_t i = 0; i < l.size(); ++i) {
            const T yi = static_cast<T>(n.payload.at(i));
            dlp[i] += dyp[i] * (stable_sigmoid(lp[i]) - yi);
          }
        });
        break;
      }
    }
  }
  return grads;
}

std::map<std::string, Tensor> Tape::backward(NodeId loss,
                                             const ParamStore& params) const {
  std::vector<Tensor> grads = backward_all(loss);
  std::map<std::string, Tensor> out;
  for (const auto& [name, tensor] : params) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end() &&
        grads[static_cast<size_t>(it->second)].defined()) {
      out.emplace(name, std::move(grads[static_cast<size_t>(it->second)]));
    } else {
      out.emplace(name, Tensor::zeros(tensor.shape(), tensor.dtype()));
    }
  }
  return out;
}

NodeId gru_cell_step(Tape& t, NodeId x_t, NodeId h_prev, const GruCellParams& p) {
  NodeId z = t.sigmoid(t.add(t.linear(x_t, p.w_z, p.b_z),
                             t.linear(h_prev, p.u_z, Tape::kNoBias)));
  NodeId r = t.sigmoid(t.add(t.linear(x_t, p.w_r, p.b_r),
                             t.linear(h_prev, p.u_r, Tape::kNoBias)));
  NodeId hc = t.tanh_(t.add(t.linear(x_t, p.w_h, p.b_h),
                            t.linear(t.mul(r, h_prev), p.u_h, Tape::kNoBias)));
  return t.add(t.mul(t.affine(z, -1.0, 1.0), h_prev), t.mul(z, hc));
}

}  // namespace relnet
