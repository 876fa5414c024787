#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "relnet/tensor.hpp"

namespace relnet {

class ParamStore;

using NodeId = int32_t;

enum class OpKind : uint8_t {
  kLeaf,
  kLinear,       // x[B,di], W[do,di], optional b[do] -> [B,do]
  kConv2d,       // x[B,Ci,H,W], k[Co,Ci,kh,kw] -> [B,Co,H',W']
  kBiasChannel,  // x[B,C,H,W] + b[C]
  kRelu,
  kSigmoid,
  kTanh,
  kAdd,
  kSub,
  kMul,
  kAffine,      // a*x + b, scalar coefficients
  kPermute,     // axes in iattrs
  kReshape,     // target shape in iattrs
  kRowSum,      // [R,C] -> [C]
  kSumAll,      // -> [1]
  kConcat0,     // 1-d inputs concatenated
  kSliceRow,    // [R,C] -> [1,C], row index in iattrs
  kPairConcat,  // cells[K,c], q[d] -> [P, 2c+d], all ordered cell pairs
  kBceLogits,   // logits[N] with saved labels -> per-element losses [N]
};

struct Node {
  OpKind kind = OpKind::kLeaf;
  std::vector<NodeId> inputs;
  Tensor value;
  std::vector<int64_t> iattrs;  // op-specific integers
  double a = 0.0, b = 0.0;      // kAffine coefficients
  Tensor payload;               // non-differentiable data (kBceLogits labels)
  std::string name;             // parameter name for named leaves
};

// Records every operation in execution order; node inputs always reference
// earlier nodes. Gradients come from a single reverse sweep.
class Tape {
 public:
  NodeId leaf(Tensor value, std::string name = {});
  // Named parameter leaf, one node per name per tape.
  NodeId param(const ParamStore& store, const std::string& name);

  NodeId linear(NodeId x, NodeId w, NodeId b);  // b = kNoBias to skip
  NodeId conv2d(NodeId x, NodeId k, int64_t stride, int64_t padding);
  NodeId bias_channel(NodeId x, NodeId b);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId tanh_(NodeId x);
  NodeId add(NodeId x, NodeId y);
  NodeId sub(NodeId x, NodeId y);
  NodeId mul(NodeId x, NodeId y);
  NodeId affine(NodeId x, double a, double b);
  NodeId permute(NodeId x, std::vector<int64_t> axes);
  NodeId reshape(NodeId x, std::vector<int64_t> shape);
  NodeId row_sum(NodeId x);
  NodeId sum_all(NodeId x);
  NodeId concat0(const std::vector<NodeId>& xs);
  NodeId slice_row(NodeId x, int64_t row);
  NodeId pair_concat(NodeId cells, NodeId q, bool include_self);
  NodeId bce_with_logits(NodeId logits, Tensor labels);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
  size_t size() const { return nodes_.size(); }

  // d(loss)/d(node) for every node; loss must be scalar. Unreached nodes get
  // undefined tensors.
  std::vector<Tensor> backward_all(NodeId loss) const;
  // Named-parameter gradients; parameters the loss never touched get zeros.
  std::map<std::string, Tensor> backward(NodeId loss, const ParamStore& params) const;

  // Re-executes every node from the recorded leaves. Bit-exact against the
  // recorded values by construction; tests verify.
  std::vector<Tensor> replay() const;

  static constexpr NodeId kNoBias = -1;

 private:
  NodeId push(Node n);
  NodeId record(Node n);  // evaluates against recorded inputs, then pushes
  std::vector<Node> nodes_;
  std::map<std::string, NodeId> param_nodes_;
};

// Standard GRU cell wired from tape primitives; gradients flow through the
// recorded graph (backprop through time when chained).
struct GruCellParams {
  NodeId w_z, u_z, b_z;
  NodeId w_r, u_r, b_r;
  NodeId w_h, u_h, b_h;
};

// x_t[B,di], h_prev[B,dh] -> h_next[B,dh]
// z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
// hc = tanh(Wh x + Uh (r*h) + bh), h' = (1-z)*h + z*hc
NodeId gru_cell_step(Tape& tape, NodeId x_t, NodeId h_prev, const GruCellParams& p);

}  // namespace relnet
