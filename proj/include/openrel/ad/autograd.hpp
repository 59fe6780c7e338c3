#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// A Graph records every operation applied to its Vars; Graph::backward walks
// the tape in reverse creation order. Parameters enter a graph as leaves and
// receive accumulated gradients in Parameter::grad. Graphs built with
// grad disabled skip closure bookkeeping and act as a plain forward pass.

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace openrel::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool valid() const { return graph != nullptr; }
};

// Captures post-softmax weights of every attention call (tests and probes).
struct AttentionRecorder {
  struct Call {
    int heads = 0;
    // One matrix per (group, head), group-major: rows = queries, cols = the
    // group's keys in key-list order.
    std::vector<Mat> weights;
    std::vector<std::vector<std::uint8_t>> key_masks;  // per group, empty when unmasked
  };
  std::vector<Call> calls;
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, const Mat&)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  // One leaf per Parameter per graph; frozen parameters never require grad.
  Var param(Parameter& p);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every leaf.
  void backward(Var root);

  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  // Lazily zero-initialized gradient buffer.
  Mat& grad_ref(int id);
  // Gradient after backward (empty when never reached).
  const Mat& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var make(Mat value, std::initializer_list<Var> inputs, Backward backward);
  Var make(Mat value, const std::vector<Var>& inputs, Backward backward);

  AttentionRecorder* recorder = nullptr;

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
  };
  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_ids_;
};

inline const Mat& Var::value() const { return graph->value(id); }

// ---- elementwise / linear algebra ----
Var matmul(Var a, Var b);
// x * w + b, with b a 1 x out row broadcast over rows.
Var linear(Var x, Var w, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var gelu(Var a);
Var sigmoid(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// ---- row plumbing ----
Var slice_rows(Var x, Eigen::Index begin, Eigen::Index count);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(Var x, const std::vector<int>& rows);

// Patch extraction for convolutions. `x` holds an (height*width) x channels
// map in row-major spatial order; output rows are output positions, columns
// are (ky, kx, channel) patch entries. Zero padding.
Var im2col(Var x, int height, int width, int channels, int kernel, int stride, int pad);

// ---- attention ----
struct AttentionGroup {
  int q_begin = 0;
  int q_len = 0;
  // Key/value rows visible to this group, as (begin, length) segments of K/V.
  std::vector<std::pair<int, int>> key_segments;
  // Optional per-key flags over the concatenated segments; 0 marks a position
  // whose logit is set to -inf before the softmax.
  std::vector<std::uint8_t> key_mask;
  // When >= 0, query i may only see group keys j <= causal_offset + i.
  int causal_offset = -1;
};

// Multi-head scaled dot-product attention over independent groups. q, k, v
// are already projected; columns are split evenly across `heads`. Rows of q
// not covered by any group stay zero. Throws if a query row sees no key.
Var attention(Var q, Var k, Var v, const std::vector<AttentionGroup>& groups, int heads);

// ---- losses (scalar 1x1 outputs) ----
// Mean binary cross-entropy of sigmoid(logits) against labels in {0,1}.
Var bce_with_logits(Var logits, const std::vector<double>& labels);
// Mean token cross-entropy over rows whose target != ignore_index.
Var cross_entropy(Var logits, const std::vector<int>& targets, int ignore_index);

}  // namespace openrel::ad
