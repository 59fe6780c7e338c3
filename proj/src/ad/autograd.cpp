#include "openrel/ad/autograd.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace openrel::ad {

Var Graph::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), false, nullptr});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::param(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var{this, it->second};
  Node node;
  node.value = p.value;
  node.requires_grad = grad_enabled_ && !p.frozen;
  if (node.requires_grad) {
    Parameter* target = &p;
    node.backward = [target](Graph&, const Mat& g) { target->grad += g; };
  }
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_ids_.emplace(&p, id);
  return Var{this, id};
}

Mat& Graph::grad_ref(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::make(Mat value, std::initializer_list<Var> inputs, Backward backward) {
  bool rg = false;
  if (grad_enabled_) {
    for (const Var& v : inputs) rg = rg || requires_grad(v.id);
  }
  nodes_.push_back(Node{std::move(value), Mat(), rg, rg ? std::move(backward) : nullptr});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::make(Mat value, const std::vector<Var>& inputs, Backward backward) {
  bool rg = false;
  if (grad_enabled_) {
    for (const Var& v : inputs) rg = rg || requires_grad(v.id);
  }
  nodes_.push_back(Node{std::move(value), Mat(), rg, rg ? std::move(backward) : nullptr});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Graph::backward(Var root) {
  if (root.graph != this) throw std::invalid_argument("backward: root belongs to another graph");
  if (value(root.id).size() != 1) throw std::invalid_argument("backward: root must be a 1x1 scalar");
  if (!requires_grad(root.id)) return;
  grad_ref(root.id).setOnes();
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Graph& g = *a.graph;
  Mat out = a.value() * b.value();
  return g.make(std::move(out), {a, b}, [a, b](Graph& g, const Mat& go) {
    if (g.requires_grad(a.id)) g.grad_ref(a.id).noalias() += go * g.value(b.id).transpose();
    if (g.requires_grad(b.id)) g.grad_ref(b.id).noalias() += g.value(a.id).transpose() * go;
  });
}

Var linear(Var x, Var w, Var b) {
  if (x.cols() != w.rows()) throw std::invalid_argument("linear: input width does not match weight rows");
  if (b.rows() != 1 || b.cols() != w.cols()) throw std::invalid_argument("linear: bias must be 1 x out");
  Graph& g = *x.graph;
  Mat out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return g.make(std::move(out), {x, w, b}, [x, w, b](Graph& g, const Mat& go) {
    if (g.requires_grad(x.id)) g.grad_ref(x.id).noalias() += go * g.value(w.id).transpose();
    if (g.requires_grad(w.id)) g.grad_ref(w.id).noalias() += g.value(x.id).transpose() * go;
    if (g.requires_grad(b.id)) g.grad_ref(b.id) += go.colwise().sum();
  });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Graph& g = *a.graph;
  return g.make(a.value() + b.value(), {a, b}, [a, b](Graph& g, const Mat& go) {
    if (g.requires_grad(a.id)) g.grad_ref(a.id) += go;
    if (g.requires_grad(b.id)) g.grad_ref(b.id) += go;
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Graph& g = *a.graph;
  return g.make(a.value() - b.value(), {a, b}, [a, b](Graph& g, const Mat& go) {
    if (g.requires_grad(a.id)) g.grad_ref(a.id) += go;
    if (g.requires_grad(b.id)) g.grad_ref(b.id) -= go;
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Graph& g = *a.graph;
  return g.make(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Graph& g, const Mat& go) {
    if (g.requires_grad(a.id)) g.grad_ref(a.id) += go.cwiseProduct(g.value(b.id));
    if (g.requires_grad(b.id)) g.grad_ref(b.id) += go.cwiseProduct(g.value(a.id));
  });
}

Var scale(Var a, double s) {
  Graph& g = *a.graph;
  return g.make(a.value() * s, {a}, [a, s](Graph& g, const Mat& go) { g.grad_ref(a.id) += go * s; });
}

Var gelu(Var a) {
  Graph& g = *a.graph;
  const Mat& x = a.value();
  Mat out(x.rows(), x.cols());
  const double* px = x.data();
  double* po = out.data();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = px[i];
    po[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return g.make(std::move(out), {a}, [a](Graph& g, const Mat& go) {
    const Mat& x = g.value(a.id);
    Mat& ga = g.grad_ref(a.id);
    const double* px = x.data();
    const double* pg = go.data();
    double* pa = ga.data();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = px[i];
      const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      pa[i] += pg[i] * d;
    }
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.graph;
  Mat out = a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  const int self = static_cast<int>(g.size());
  return g.make(std::move(out), {a}, [a, self](Graph& g, const Mat& go) {
    const Mat& y = g.value(self);
    g.grad_ref(a.id).array() += go.array() * y.array() * (1.0 - y.array());
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Eigen::Index n = x.cols();
  if (gamma.cols() != n || beta.cols() != n || gamma.rows() != 1 || beta.rows() != 1) {
    throw std::invalid_argument("layer_norm: gamma/beta must be 1 x width");
  }
  Graph& g = *x.graph;
  const Mat& xv = x.value();
  auto xhat = std::make_shared<Mat>(xv.rows(), n);
  auto inv_std = std::make_shared<Eigen::VectorXd>(xv.rows());
  Mat out(xv.rows(), n);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(r) = is;
    xhat->row(r) = (xv.row(r).array() - mean) * is;
    out.row(r) = xhat->row(r).cwiseProduct(gamma.value().row(0)) + beta.value().row(0);
  }
  return g.make(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std, n](Graph& g, const Mat& go) {
    if (g.requires_grad(gamma.id)) g.grad_ref(gamma.id) += go.cwiseProduct(*xhat).colwise().sum();
    if (g.requires_grad(beta.id)) g.grad_ref(beta.id) += go.colwise().sum();
    if (g.requires_grad(x.id)) {
      Mat& gx = g.grad_ref(x.id);
      const auto gam = g.value(gamma.id).row(0);
      for (Eigen::Index r = 0; r < go.rows(); ++r) {
        const RowVec dxhat = go.row(r).cwiseProduct(gam);
        const double m1 = dxhat.mean();
        const double m2 = dxhat.cwiseProduct(xhat->row(r)).mean();
        gx.row(r) += (*inv_std)(r) * (dxhat.array() - m1 - xhat->row(r).array() * m2).matrix();
      }
    }
    (void)n;
  });
}

Var slice_rows(Var x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) throw std::out_of_range("slice_rows: range out of bounds");
  Graph& g = *x.graph;
  Mat out = x.value().middleRows(begin, count);
  return g.make(std::move(out), {x}, [x, begin, count](Graph& g, const Mat& go) {
    g.grad_ref(x.id).middleRows(begin, count) += go;
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Graph& g = *parts.front().graph;
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return g.make(std::move(out), parts, [parts](Graph& g, const Mat& go) {
    Eigen::Index r = 0;
    for (const Var& p : parts) {
      const Eigen::Index n = g.value(p.id).rows();
      if (g.requires_grad(p.id)) g.grad_ref(p.id) += go.middleRows(r, n);
      r += n;
    }
  });
}

Var gather_rows(Var x, const std::vector<int>& rows) {
  Graph& g = *x.graph;
  const Mat& xv = x.value();
  Mat out(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= xv.rows()) throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = xv.row(rows[i]);
  }
  return g.make(std::move(out), {x}, [x, rows](Graph& g, const Mat& go) {
    Mat& gx = g.grad_ref(x.id);
    for (std::size_t i = 0; i < rows.size(); ++i) gx.row(rows[i]) += go.row(static_cast<Eigen::Index>(i));
  });
}

Var im2col(Var x, int height, int width, int channels, int kernel, int stride, int pad) {
  if (x.rows() != static_cast<Eigen::Index>(height) * width || x.cols() != channels) {
    throw std::invalid_argument("im2col: input is not (height*width) x channels");
  }
  const int oh = (height + 2 * pad - kernel) / stride + 1;
  const int ow = (width + 2 * pad - kernel) / stride + 1;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("im2col: kernel larger than padded input");
  Graph& g = *x.graph;
  const Mat& xv = x.value();
  Mat out = Mat::Zero(static_cast<Eigen::Index>(oh) * ow, static_cast<Eigen::Index>(kernel) * kernel * channels);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index orow = static_cast<Eigen::Index>(oy) * ow + ox;
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= height) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= width) continue;
          out.row(orow).segment((static_cast<Eigen::Index>(ky) * kernel + kx) * channels, channels) =
              xv.row(static_cast<Eigen::Index>(iy) * width + ix);
        }
      }
    }
  }
  return g.make(std::move(out), {x}, [=](Graph& g, const Mat& go) {
    Mat& gx = g.grad_ref(x.id);
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index orow = static_cast<Eigen::Index>(oy) * ow + ox;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= height) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= width) continue;
            gx.row(static_cast<Eigen::Index>(iy) * width + ix) +=
                go.row(orow).segment((static_cast<Eigen::Index>(ky) * kernel + kx) * channels, channels);
          }
        }
      }
    }
  });
}

namespace {

Mat gather_segments(const Mat& src, const std::vector<std::pair<int, int>>& segments, Eigen::Index total) {
  Mat out(total, src.cols());
  Eigen::Index r = 0;
  for (const auto& [b, n] : segments) {
    out.middleRows(r, n) = src.middleRows(b, n);
    r += n;
  }
  return out;
}

void scatter_segments(Mat& dst, const std::vector<std::pair<int, int>>& segments, const Mat& src) {
  Eigen::Index r = 0;
  for (const auto& [b, n] : segments) {
    dst.middleRows(b, n) += src.middleRows(r, n);
    r += n;
  }
}

}  // namespace

Var attention(Var q, Var k, Var v, const std::vector<AttentionGroup>& groups, int heads) {
  const Eigen::Index d = q.cols();
  if (heads <= 0 || d % heads != 0) throw std::invalid_argument("attention: heads must divide the width");
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) throw std::invalid_argument("attention: q/k/v shape mismatch");
  const Eigen::Index dh = d / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  Graph& g = *q.graph;
  const Mat& qv = q.value();
  const Mat& kv = k.value();
  const Mat& vv = v.value();

  std::vector<Eigen::Index> key_counts(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& grp = groups[gi];
    Eigen::Index nk = 0;
    for (const auto& [b, n] : grp.key_segments) {
      if (b < 0 || n < 0 || b + n > kv.rows()) throw std::out_of_range("attention: key segment out of range");
      nk += n;
    }
    if (!grp.key_mask.empty() && static_cast<Eigen::Index>(grp.key_mask.size()) != nk) {
      throw std::invalid_argument("attention: key mask length does not match the group's keys");
    }
    if (grp.q_begin < 0 || grp.q_begin + grp.q_len > qv.rows()) throw std::out_of_range("attention: query range out of bounds");
    key_counts[gi] = nk;
  }

  auto probs = std::make_shared<std::vector<Mat>>();
  probs->reserve(groups.size() * static_cast<std::size_t>(heads));
  Mat out = Mat::Zero(qv.rows(), d);
  AttentionRecorder::Call* record = nullptr;
  if (g.recorder != nullptr) {
    g.recorder->calls.emplace_back();
    record = &g.recorder->calls.back();
    record->heads = heads;
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& grp = groups[gi];
    const Eigen::Index nk = key_counts[gi];
    const Mat kg = gather_segments(kv, grp.key_segments, nk);
    const Mat vg = gather_segments(vv, grp.key_segments, nk);
    if (record) record->key_masks.push_back(grp.key_mask);
    for (int h = 0; h < heads; ++h) {
      const auto qh = qv.block(grp.q_begin, h * dh, grp.q_len, dh);
      Mat s = (qh * kg.middleCols(h * dh, dh).transpose()) * scale_factor;
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        auto hidden = [&](Eigen::Index j) {
          const bool masked = !grp.key_mask.empty() && grp.key_mask[static_cast<std::size_t>(j)] == 0;
          return masked || (grp.causal_offset >= 0 && j > grp.causal_offset + i);
        };
        for (Eigen::Index j = 0; j < nk; ++j) {
          if (hidden(j)) s(i, j) = kNegInf;
        }
        const double mx = s.row(i).maxCoeff();
        if (!std::isfinite(mx)) throw std::invalid_argument("attention: a query row has no visible key (empty mask)");
        s.row(i) = (s.row(i).array() - mx).exp();
        // Vectorized exp may return a denormal for -inf.
        for (Eigen::Index j = 0; j < nk; ++j) {
          if (hidden(j)) s(i, j) = 0.0;
        }
        s.row(i) /= s.row(i).sum();
      }
      out.block(grp.q_begin, h * dh, grp.q_len, dh).noalias() = s * vg.middleCols(h * dh, dh);
      if (record) record->weights.push_back(s);
      probs->push_back(std::move(s));
    }
  }

  return g.make(std::move(out), {q, k, v}, [q, k, v, groups, heads, dh, scale_factor, probs, key_counts](Graph& g, const Mat& go) {
    const Mat& qv = g.value(q.id);
    const Mat& kv = g.value(k.id);
    const Mat& vv = g.value(v.id);
    const bool gq = g.requires_grad(q.id);
    const bool gk = g.requires_grad(k.id);
    const bool gv = g.requires_grad(v.id);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& grp = groups[gi];
      const Eigen::Index nk = key_counts[gi];
      const Mat kg = gather_segments(kv, grp.key_segments, nk);
      const Mat vg = gather_segments(vv, grp.key_segments, nk);
      Mat dk = Mat::Zero(nk, kv.cols());
      Mat dv = Mat::Zero(nk, vv.cols());
      for (int h = 0; h < heads; ++h) {
        const Mat& p = (*probs)[gi * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
        const auto dout = go.block(grp.q_begin, h * dh, grp.q_len, dh);
        const auto qh = qv.block(grp.q_begin, h * dh, grp.q_len, dh);
        if (gv) dv.middleCols(h * dh, dh).noalias() += p.transpose() * dout;
        if (!gq && !gk) continue;
        const Mat dp = dout * vg.middleCols(h * dh, dh).transpose();
        Mat ds = p.cwiseProduct(dp);
        const Eigen::VectorXd rowdot = ds.rowwise().sum();
        ds -= p.cwiseProduct(rowdot.replicate(1, nk));
        ds *= scale_factor;
        if (gq) g.grad_ref(q.id).block(grp.q_begin, h * dh, grp.q_len, dh).noalias() += ds * kg.middleCols(h * dh, dh);
        if (gk) dk.middleCols(h * dh, dh).noalias() += ds.transpose() * qh;
      }
      if (gk) scatter_segments(g.grad_ref(k.id), grp.key_segments, dk);
      if (gv) scatter_segments(g.grad_ref(v.id), grp.key_segments, dv);
    }
  });
}

Var bce_with_logits(Var logits, const std::vector<double>& labels) {
  const Mat& x = logits.value();
  if (x.cols() != 1 || static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw std::invalid_argument("bce_with_logits: need one label per logit row");
  }
  Graph& g = *logits.graph;
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double z = x(i, 0);
    const double y = labels[static_cast<std::size_t>(i)];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Mat out(1, 1);
  out(0, 0) = labels.empty() ? 0.0 : total / n;
  return g.make(std::move(out), {logits}, [logits, labels, n](Graph& g, const Mat& go) {
    const Mat& x = g.value(logits.id);
    Mat& gx = g.grad_ref(logits.id);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-x(i, 0)));
      gx(i, 0) += go(0, 0) * (s - labels[static_cast<std::size_t>(i)]) / n;
    }
  });
}

Var cross_entropy(Var logits, const std::vector<int>& targets, int ignore_index) {
  const Mat& x = logits.value();
  if (static_cast<std::size_t>(x.rows()) != targets.size()) {
    throw std::invalid_argument("cross_entropy: need one target per logit row");
  }
  Graph& g = *logits.graph;
  auto softmax = std::make_shared<Mat>(x.rows(), x.cols());
  double total = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    softmax->row(i) = (x.row(i).array() - mx).exp();
    const double z = softmax->row(i).sum();
    softmax->row(i) /= z;
    const int t = targets[static_cast<std::size_t>(i)];
    if (t == ignore_index) continue;
    if (t < 0 || t >= x.cols()) throw std::out_of_range("cross_entropy: target id out of range");
    total += -(x(i, t) - mx - std::log(z));
    ++count;
  }
  Mat out(1, 1);
  out(0, 0) = count > 0 ? total / count : 0.0;
  return g.make(std::move(out), {logits}, [logits, targets, ignore_index, softmax, count](Graph& g, const Mat& go) {
    if (count == 0) return;
    Mat& gx = g.grad_ref(logits.id);
    const double s = go(0, 0) / count;
    for (Eigen::Index i = 0; i < gx.rows(); ++i) {
      const int t = targets[static_cast<std::size_t>(i)];
      if (t == ignore_index) continue;
      gx.row(i) += s * softmax->row(i);
      gx(i, t) -= s;
    }
  });
}

}  // namespace openrel::ad
