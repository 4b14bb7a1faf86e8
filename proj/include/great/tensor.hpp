#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "great/errors.hpp"

namespace great::ad {

using Buffer = std::vector<double>;
using Shape = std::vector<int>;
using Mask = std::vector<std::uint8_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t p = 1;
  for (int d : s) p *= static_cast<std::size_t>(d);
  return p;
}

inline int last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

inline std::size_t rows_of(const Shape& s) {
  return s.empty() ? 1 : numel(s) / static_cast<std::size_t>(s.back());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out + "]";
}

class Tape;

/// Handle to a tape node. Cheap to copy; the tape owns the graph.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;
  Shape shape;
  std::shared_ptr<Buffer> value;

  bool defined() const { return tape != nullptr; }
  std::size_t size() const { return value ? value->size() : 0; }
  double scalar() const { return (*value)[0]; }
  const Buffer& data() const { return *value; }
};

/// Reverse-mode tape. One tape per forward/backward pass; reset between
/// batches. Single-threaded by construction, so replaying identical inputs
/// reproduces bitwise-identical gradients.
class Tape {
 public:
  struct Node {
    Shape shape;
    std::shared_ptr<Buffer> value;
    Buffer grad;
    std::function<void(Tape&)> backward;
    bool needs_grad = false;
  };

  bool grad_enabled = true;

  std::vector<Node>& nodes() { return nodes_; }
  Buffer& grad(int id) { return nodes_[id].grad; }
  const Buffer& val(int id) const { return *nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  void reset() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  /// Constant node; gradients never flow into it.
  Tensor input(Shape shape, Buffer data) {
    if (numel(shape) != data.size())
      throw ShapeError("input data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    return emplace(std::move(shape), std::make_shared<Buffer>(std::move(data)), false, nullptr);
  }

  Tensor input_scalar(double v) { return input({1}, Buffer{v}); }

  /// Differentiable leaf aliasing externally owned storage (a parameter).
  Tensor leaf(Shape shape, std::shared_ptr<Buffer> value) {
    if (numel(shape) != value->size())
      throw ShapeError("leaf storage does not match shape " + shape_str(shape));
    return emplace(std::move(shape), std::move(value), grad_enabled, nullptr);
  }

  Tensor make(const char* op, Shape shape, Buffer value, std::initializer_list<int> parents,
              std::function<void(Tape&)> backward) {
    for (double v : value)
      if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
    bool needs = false;
    if (grad_enabled)
      for (int p : parents) needs = needs || nodes_[p].needs_grad;
    return emplace(std::move(shape), std::make_shared<Buffer>(std::move(value)), needs,
                   needs ? std::move(backward) : nullptr);
  }

  /// Like make() but shares the parent's buffer (pure view ops).
  Tensor make_view(Shape shape, int parent, std::function<void(Tape&)> backward) {
    const bool needs = grad_enabled && nodes_[parent].needs_grad;
    return emplace(std::move(shape), nodes_[parent].value, needs,
                   needs ? std::move(backward) : nullptr);
  }

  /// Seeds d(loss)/d(loss) = 1 and walks the graph once in reverse.
  void backward(const Tensor& loss) {
    if (loss.tape != this) throw ContractError("backward on a tensor from another tape");
    if (loss.size() != 1) throw ShapeError("backward requires a scalar loss");
    if (!grad_enabled || !nodes_[loss.id].needs_grad)
      throw ContractError("backward on a non-differentiable value");
    nodes_[loss.id].grad[0] += 1.0;
    for (int i = loss.id; i >= 0; --i)
      if (nodes_[i].backward) nodes_[i].backward(*this);
  }

 private:
  Tensor emplace(Shape shape, std::shared_ptr<Buffer> value, bool needs,
                 std::function<void(Tape&)> backward) {
    Node node;
    node.shape = shape;
    node.value = value;
    node.needs_grad = needs;
    node.backward = std::move(backward);
    if (needs) node.grad.assign(value->size(), 0.0);
    nodes_.push_back(std::move(node));
    Tensor t;
    t.tape = this;
    t.id = static_cast<int>(nodes_.size()) - 1;
    t.shape = std::move(shape);
    t.value = std::move(value);
    return t;
  }

  std::vector<Node> nodes_;
};

namespace detail {

inline void same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

inline void add_into(Buffer& dst, const Buffer& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape " + shape_str(x.shape) + " -> " + shape_str(shape));
  const int xid = x.id;
  Tensor y = x.tape->make_view(std::move(shape), xid, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid](Tape& t) {
      if (!t.grad(xid).empty()) detail::add_into(t.grad(xid), t.grad(yid));
    };
  return y;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::same_tape(a, b);
  if (a.size() != b.size()) throw ShapeError("add size mismatch");
  Buffer out(a.size());
  const Buffer &av = *a.value, &bv = *b.value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const int aid = a.id, bid = b.id;
  Tensor y = a.tape->make("add", a.shape, std::move(out), {aid, bid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [aid, bid, yid](Tape& t) {
      const Buffer& g = t.grad(yid);
      if (!t.grad(aid).empty()) detail::add_into(t.grad(aid), g);
      if (!t.grad(bid).empty()) detail::add_into(t.grad(bid), g);
    };
  return y;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::same_tape(a, b);
  if (a.size() != b.size()) throw ShapeError("sub size mismatch");
  Buffer out(a.size());
  const Buffer &av = *a.value, &bv = *b.value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const int aid = a.id, bid = b.id;
  Tensor y = a.tape->make("sub", a.shape, std::move(out), {aid, bid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [aid, bid, yid](Tape& t) {
      const Buffer& g = t.grad(yid);
      if (!t.grad(aid).empty()) detail::add_into(t.grad(aid), g);
      if (!t.grad(bid).empty()) {
        Buffer& gb = t.grad(bid);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
      }
    };
  return y;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  detail::same_tape(a, b);
  if (a.size() != b.size()) throw ShapeError("hadamard size mismatch");
  Buffer out(a.size());
  const Buffer &av = *a.value, &bv = *b.value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const int aid = a.id, bid = b.id;
  Tensor y = a.tape->make("hadamard", a.shape, std::move(out), {aid, bid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [aid, bid, yid](Tape& t) {
      const Buffer& g = t.grad(yid);
      const Buffer &av = t.val(aid), &bv = t.val(bid);
      if (!t.grad(aid).empty()) {
        Buffer& ga = t.grad(aid);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (!t.grad(bid).empty()) {
        Buffer& gb = t.grad(bid);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
      }
    };
  return y;
}

inline Tensor scale(const Tensor& x, double c) {
  Buffer out(x.size());
  const Buffer& xv = *x.value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * c;
  const int xid = x.id;
  Tensor y = x.tape->make("scale", x.shape, std::move(out), {xid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid, c](Tape& t) {
      const Buffer& g = t.grad(yid);
      Buffer& gx = t.grad(xid);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * c;
    };
  return y;
}

inline Tensor relu(const Tensor& x) {
  Buffer out(x.size());
  const Buffer& xv = *x.value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const int xid = x.id;
  Tensor y = x.tape->make("relu", x.shape, std::move(out), {xid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid](Tape& t) {
      const Buffer& g = t.grad(yid);
      const Buffer& xv = t.val(xid);
      Buffer& gx = t.grad(xid);
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (xv[i] > 0.0) gx[i] += g[i];
    };
  return y;
}

inline Tensor tanh(const Tensor& x) {
  Buffer out(x.size());
  const Buffer& xv = *x.value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  const int xid = x.id;
  Tensor y = x.tape->make("tanh", x.shape, std::move(out), {xid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid](Tape& t) {
      const Buffer& g = t.grad(yid);
      const Buffer& yv = t.val(yid);
      Buffer& gx = t.grad(xid);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (1.0 - yv[i] * yv[i]);
    };
  return y;
}

/// Affine map over the last axis: y = x W (+ b).
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b = nullptr) {
  detail::same_tape(x, w);
  if (w.shape.size() != 2)
    throw ShapeError("linear weight must be 2-d, got " + shape_str(w.shape));
  const int in = w.shape[0], out_dim = w.shape[1];
  if (last_dim(x.shape) != in)
    throw ShapeError("linear: input " + shape_str(x.shape) + " does not match weight " +
                     shape_str(w.shape));
  if (b && b->size() != static_cast<std::size_t>(out_dim))
    throw ShapeError("linear: bias " + shape_str(b->shape) + " does not match weight " +
                     shape_str(w.shape));
  const std::size_t rows = rows_of(x.shape);
  Buffer out(rows * out_dim, 0.0);
  const Buffer &xv = *x.value, &wv = *w.value;
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = out.data() + r * out_dim;
    if (b) {
      const Buffer& bv = *b->value;
      for (int c = 0; c < out_dim; ++c) orow[c] = bv[c];
    }
    const double* xrow = xv.data() + r * in;
    for (int k = 0; k < in; ++k) {
      const double xk = xrow[k];
      const double* wrow = wv.data() + static_cast<std::size_t>(k) * out_dim;
      for (int c = 0; c < out_dim; ++c) orow[c] += xk * wrow[c];
    }
  }
  Shape yshape = x.shape;
  yshape.back() = out_dim;
  const int xid = x.id, wid = w.id, bid = b ? b->id : -1;
  Tensor y = b ? x.tape->make("linear", yshape, std::move(out), {xid, wid, bid}, nullptr)
               : x.tape->make("linear", yshape, std::move(out), {xid, wid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, wid, bid, yid, rows, in, out_dim](Tape& t) {
      const Buffer& g = t.grad(yid);
      const Buffer &xv = t.val(xid), &wv = t.val(wid);
      if (!t.grad(xid).empty()) {
        Buffer& gx = t.grad(xid);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* grow = g.data() + r * out_dim;
          double* gxrow = gx.data() + r * in;
          for (int k = 0; k < in; ++k) {
            const double* wrow = wv.data() + static_cast<std::size_t>(k) * out_dim;
            double s = 0.0;
            for (int c = 0; c < out_dim; ++c) s += grow[c] * wrow[c];
            gxrow[k] += s;
          }
        }
      }
      if (!t.grad(wid).empty()) {
        Buffer& gw = t.grad(wid);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* grow = g.data() + r * out_dim;
          const double* xrow = xv.data() + r * in;
          for (int k = 0; k < in; ++k) {
            const double xk = xrow[k];
            if (xk == 0.0) continue;
            double* gwrow = gw.data() + static_cast<std::size_t>(k) * out_dim;
            for (int c = 0; c < out_dim; ++c) gwrow[c] += xk * grow[c];
          }
        }
      }
      if (bid >= 0 && !t.grad(bid).empty()) {
        Buffer& gb = t.grad(bid);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* grow = g.data() + r * out_dim;
          for (int c = 0; c < out_dim; ++c) gb[c] += grow[c];
        }
      }
    };
  return y;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) { return linear(a, b); }

/// Row-wise dot product of two [r, c] tensors -> [r].
inline Tensor rowdot(const Tensor& a, const Tensor& b) {
  detail::same_tape(a, b);
  if (a.shape != b.shape || a.shape.size() != 2) throw ShapeError("rowdot expects equal 2-d shapes");
  const int r = a.shape[0], c = a.shape[1];
  Buffer out(r, 0.0);
  const Buffer &av = *a.value, &bv = *b.value;
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    const double* ar = av.data() + static_cast<std::size_t>(i) * c;
    const double* br = bv.data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j) s += ar[j] * br[j];
    out[i] = s;
  }
  const int aid = a.id, bid = b.id;
  Tensor y = a.tape->make("rowdot", {r}, std::move(out), {aid, bid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [aid, bid, yid, r, c](Tape& t) {
      const Buffer& g = t.grad(yid);
      const Buffer &av = t.val(aid), &bv = t.val(bid);
      if (!t.grad(aid).empty()) {
        Buffer& ga = t.grad(aid);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) ga[static_cast<std::size_t>(i) * c + j] += g[i] * bv[static_cast<std::size_t>(i) * c + j];
      }
      if (!t.grad(bid).empty()) {
        Buffer& gb = t.grad(bid);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) gb[static_cast<std::size_t>(i) * c + j] += g[i] * av[static_cast<std::size_t>(i) * c + j];
      }
    };
  return y;
}

/// Softmax over the last axis. A mask entry of 0 forces probability exactly 0;
/// every row must keep at least one unmasked slot. Stabilized by max-subtraction.
inline Tensor softmax_masked(const Tensor& logits, const Mask* mask = nullptr) {
  const int k = last_dim(logits.shape);
  const std::size_t rows = rows_of(logits.shape);
  if (mask && mask->size() != logits.size()) throw ShapeError("softmax mask size mismatch");
  Buffer out(logits.size(), 0.0);
  const Buffer& xv = *logits.value;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xrow = xv.data() + r * k;
    const std::uint8_t* mrow = mask ? mask->data() + r * k : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j)
      if (!mrow || mrow[j]) mx = std::max(mx, xrow[j]);
    if (mx == -std::numeric_limits<double>::infinity())
      throw NoValidActionError("softmax row " + std::to_string(r) + " is fully masked");
    double denom = 0.0;
    double* orow = out.data() + r * k;
    for (int j = 0; j < k; ++j)
      if (!mrow || mrow[j]) {
        orow[j] = std::exp(xrow[j] - mx);
        denom += orow[j];
      }
    for (int j = 0; j < k; ++j)
      if (!mrow || mrow[j]) orow[j] /= denom;
  }
  const int xid = logits.id;
  auto mask_copy = mask ? std::make_shared<Mask>(*mask) : nullptr;
  Tensor y = logits.tape->make("softmax", logits.shape, std::move(out), {xid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid, rows, k, mask_copy](Tape& t) {
      const Buffer& g = t.grad(yid);
      const Buffer& yv = t.val(yid);
      Buffer& gx = t.grad(xid);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = g.data() + r * k;
        const double* yrow = yv.data() + r * k;
        const std::uint8_t* mrow = mask_copy ? mask_copy->data() + r * k : nullptr;
        double dot = 0.0;
        for (int j = 0; j < k; ++j)
          if (!mrow || mrow[j]) dot += grow[j] * yrow[j];
        double* gxrow = gx.data() + r * k;
        for (int j = 0; j < k; ++j)
          if (!mrow || mrow[j]) gxrow[j] += yrow[j] * (grow[j] - dot);
      }
    };
  return y;
}

/// log p(action) under the masked softmax of `logits`; scalar output.
inline Tensor masked_log_prob(const Tensor& logits, const Mask& mask, int action) {
  if (logits.shape.size() != 1) throw ShapeError("masked_log_prob expects a vector of logits");
  const int k = logits.shape[0];
  if (mask.size() != static_cast<std::size_t>(k)) throw ShapeError("mask size mismatch");
  if (action < 0 || action >= k || !mask[action])
    throw ContractError("log-prob of a masked action " + std::to_string(action));
  const Buffer& xv = *logits.value;
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j)
    if (mask[j]) mx = std::max(mx, xv[j]);
  if (mx == -std::numeric_limits<double>::infinity())
    throw NoValidActionError("masked_log_prob: all actions masked");
  double denom = 0.0;
  for (int j = 0; j < k; ++j)
    if (mask[j]) denom += std::exp(xv[j] - mx);
  const double logp = xv[action] - mx - std::log(denom);
  const int xid = logits.id;
  auto mask_copy = std::make_shared<Mask>(mask);
  Tensor y = logits.tape->make("masked_log_prob", {1}, Buffer{logp}, {xid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid, k, action, mask_copy, mx, denom](Tape& t) {
      const double g = t.grad(yid)[0];
      const Buffer& xv = t.val(xid);
      Buffer& gx = t.grad(xid);
      for (int j = 0; j < k; ++j)
        if ((*mask_copy)[j]) {
          const double p = std::exp(xv[j] - mx) / denom;
          gx[j] += g * ((j == action ? 1.0 : 0.0) - p);
        }
    };
  return y;
}

/// Row-wise standardization over the last axis followed by an affine map.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  detail::same_tape(x, gain);
  detail::same_tape(x, bias);
  const int d = last_dim(x.shape);
  if (d < 1) throw ShapeError("layer_norm needs a trailing feature axis");
  if (gain.size() != static_cast<std::size_t>(d) || bias.size() != static_cast<std::size_t>(d))
    throw ShapeError("layer_norm gain/bias must have length " + std::to_string(d));
  const std::size_t rows = rows_of(x.shape);
  Buffer out(x.size());
  auto xhat = std::make_shared<Buffer>(x.size());
  auto inv_sigma = std::make_shared<Buffer>(rows);
  const Buffer &xv = *x.value, &gv = *gain.value, &bv = *bias.value;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xrow = xv.data() + r * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xrow[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = xrow[j] - mean;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[r] = inv;
    double* hrow = xhat->data() + r * d;
    double* orow = out.data() + r * d;
    for (int j = 0; j < d; ++j) {
      hrow[j] = (xrow[j] - mean) * inv;
      orow[j] = gv[j] * hrow[j] + bv[j];
    }
  }
  const int xid = x.id, gid = gain.id, bid = bias.id;
  Tensor y = x.tape->make("layer_norm", x.shape, std::move(out), {xid, gid, bid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, gid, bid, yid, rows, d, xhat, inv_sigma](Tape& t) {
      const Buffer& g = t.grad(yid);
      const Buffer& gv = t.val(gid);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = g.data() + r * d;
        const double* hrow = xhat->data() + r * d;
        if (!t.grad(gid).empty()) {
          Buffer& gg = t.grad(gid);
          for (int j = 0; j < d; ++j) gg[j] += grow[j] * hrow[j];
        }
        if (!t.grad(bid).empty()) {
          Buffer& gb = t.grad(bid);
          for (int j = 0; j < d; ++j) gb[j] += grow[j];
        }
        if (!t.grad(xid).empty()) {
          Buffer& gx = t.grad(xid);
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < d; ++j) {
            const double h = grow[j] * gv[j];
            m1 += h;
            m2 += h * hrow[j];
          }
          m1 /= d;
          m2 /= d;
          const double inv = (*inv_sigma)[r];
          double* gxrow = gx.data() + r * d;
          for (int j = 0; j < d; ++j)
            gxrow[j] += (grow[j] * gv[j] - m1 - hrow[j] * m2) * inv;
        }
      }
    };
  return y;
}

/// Parameter-free row standardization (mean 0, variance 1 over the last
/// axis). Same math as layer_norm with unit gain and zero bias.
inline Tensor standardize_rows(const Tensor& x, double eps = 1e-5) {
  const int d = last_dim(x.shape);
  const std::size_t rows = rows_of(x.shape);
  Buffer out(x.size());
  auto xhat = std::make_shared<Buffer>(x.size());
  auto inv_sigma = std::make_shared<Buffer>(rows);
  const Buffer& xv = *x.value;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xrow = xv.data() + r * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xrow[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = xrow[j] - mean;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[r] = inv;
    for (int j = 0; j < d; ++j) {
      (*xhat)[r * d + j] = (xrow[j] - mean) * inv;
      out[r * d + j] = (*xhat)[r * d + j];
    }
  }
  const int xid = x.id;
  Tensor y = x.tape->make("standardize_rows", x.shape, std::move(out), {xid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid, rows, d, xhat, inv_sigma](Tape& t) {
      const Buffer& g = t.grad(yid);
      Buffer& gx = t.grad(xid);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = g.data() + r * d;
        const double* hrow = xhat->data() + r * d;
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < d; ++j) {
          m1 += grow[j];
          m2 += grow[j] * hrow[j];
        }
        m1 /= d;
        m2 /= d;
        const double inv = (*inv_sigma)[r];
        for (int j = 0; j < d; ++j)
          gx[r * d + j] += (grow[j] - m1 - hrow[j] * m2) * inv;
      }
    };
  return y;
}

/// Concatenation along the last axis; all inputs share leading dimensions.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t rows = rows_of(parts[0].shape);
  int total = 0;
  for (const auto& p : parts) {
    detail::same_tape(parts[0], p);
    if (rows_of(p.shape) != rows) throw ShapeError("concat_cols row mismatch");
    total += last_dim(p.shape);
  }
  Buffer out(rows * total);
  std::vector<int> ids(parts.size());
  std::vector<int> widths(parts.size());
  int off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    ids[p] = parts[p].id;
    widths[p] = last_dim(parts[p].shape);
    const Buffer& pv = *parts[p].value;
    for (std::size_t r = 0; r < rows; ++r)
      for (int j = 0; j < widths[p]; ++j)
        out[r * total + off + j] = pv[r * widths[p] + j];
    off += widths[p];
  }
  Shape yshape = parts[0].shape;
  if (yshape.empty()) yshape = {total};
  else yshape.back() = total;
  Tape& tape = *parts[0].tape;
  bool needs = false;
  if (tape.grad_enabled)
    for (int pid : ids) needs = needs || tape.needs_grad(pid);
  Tensor y = tape.make("concat_cols", yshape, std::move(out), {}, nullptr);
  const int yid = y.id;
  // parents were not passed through make(); fix the flag and closure by hand
  if (needs) {
    tape.nodes()[yid].needs_grad = true;
    tape.nodes()[yid].grad.assign(y.size(), 0.0);
    tape.nodes()[yid].backward = [ids, widths, yid, rows, total](Tape& t) {
      const Buffer& g = t.grad(yid);
      int off = 0;
      for (std::size_t p = 0; p < ids.size(); ++p) {
        Buffer& gp = t.grad(ids[p]);
        if (!gp.empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (int j = 0; j < widths[p]; ++j)
              gp[r * widths[p] + j] += g[r * total + off + j];
        off += widths[p];
      }
    };
  }
  return y;
}

inline Tensor slice_cols(const Tensor& x, int start, int width) {
  const int c = last_dim(x.shape);
  if (start < 0 || width < 1 || start + width > c) throw ShapeError("slice_cols out of range");
  const std::size_t rows = rows_of(x.shape);
  Buffer out(rows * width);
  const Buffer& xv = *x.value;
  for (std::size_t r = 0; r < rows; ++r)
    for (int j = 0; j < width; ++j) out[r * width + j] = xv[r * c + start + j];
  Shape yshape = x.shape;
  yshape.back() = width;
  const int xid = x.id;
  Tensor y = x.tape->make("slice_cols", yshape, std::move(out), {xid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid, rows, c, start, width](Tape& t) {
      const Buffer& g = t.grad(yid);
      Buffer& gx = t.grad(xid);
      for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < width; ++j) gx[r * c + start + j] += g[r * width + j];
    };
  return y;
}

/// y[r, :] = x[idx[r], :]. Repeated indices accumulate gradient.
inline Tensor gather_rows(const Tensor& x, std::vector<int> idx) {
  if (x.shape.size() != 2) throw ShapeError("gather_rows expects a 2-d tensor");
  const int rows_in = x.shape[0], c = x.shape[1];
  for (int i : idx)
    if (i < 0 || i >= rows_in) throw ShapeError("gather_rows index out of range");
  const std::size_t rows = idx.size();
  Buffer out(rows * c);
  const Buffer& xv = *x.value;
  for (std::size_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) out[r * c + j] = xv[static_cast<std::size_t>(idx[r]) * c + j];
  const int xid = x.id;
  auto idx_copy = std::make_shared<std::vector<int>>(std::move(idx));
  Tensor y = x.tape->make("gather_rows", {static_cast<int>(rows), c}, std::move(out), {xid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid, rows, c, idx_copy](Tape& t) {
      const Buffer& g = t.grad(yid);
      Buffer& gx = t.grad(xid);
      for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j)
          gx[static_cast<std::size_t>((*idx_copy)[r]) * c + j] += g[r * c + j];
    };
  return y;
}

/// Row permutation: y[r, :] = x[perm[r], :] with perm a bijection.
inline Tensor permute_rows(const Tensor& x, const std::vector<int>& perm) {
  if (x.shape.size() != 2 || perm.size() != static_cast<std::size_t>(x.shape[0]))
    throw ShapeError("permute_rows expects a full row permutation");
  return gather_rows(x, std::vector<int>(perm));
}

/// Column means: [r, c] -> [1, c].
inline Tensor mean_rows(const Tensor& x) {
  if (x.shape.size() != 2) throw ShapeError("mean_rows expects a 2-d tensor");
  const int r = x.shape[0], c = x.shape[1];
  Buffer out(c, 0.0);
  const Buffer& xv = *x.value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j] += xv[static_cast<std::size_t>(i) * c + j];
  for (int j = 0; j < c; ++j) out[j] /= r;
  const int xid = x.id;
  Tensor y = x.tape->make("mean_rows", {1, c}, std::move(out), {xid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid, r, c](Tape& t) {
      const Buffer& g = t.grad(yid);
      Buffer& gx = t.grad(xid);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) gx[static_cast<std::size_t>(i) * c + j] += g[j] / r;
    };
  return y;
}

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : *x.value) s += v;
  const int xid = x.id;
  Tensor y = x.tape->make("sum_all", {1}, Buffer{s}, {xid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid](Tape& t) {
      const double g = t.grad(yid)[0];
      Buffer& gx = t.grad(xid);
      for (double& v : gx) v += g;
    };
  return y;
}

/// Grouped attention pooling: values [G*K, dv] with weights alpha [G, K]
/// produce out[g, :] = sum_k alpha[g, k] * values[g*K + k, :].
inline Tensor attention_pool(const Tensor& values, const Tensor& alpha) {
  detail::same_tape(values, alpha);
  if (alpha.shape.size() != 2 || values.shape.size() != 2)
    throw ShapeError("attention_pool expects 2-d operands");
  const int groups = alpha.shape[0], k = alpha.shape[1], dv = values.shape[1];
  if (values.shape[0] != groups * k) throw ShapeError("attention_pool value rows != G*K");
  Buffer out(static_cast<std::size_t>(groups) * dv, 0.0);
  const Buffer &vv = *values.value, &av = *alpha.value;
  for (int g = 0; g < groups; ++g) {
    double* orow = out.data() + static_cast<std::size_t>(g) * dv;
    for (int j = 0; j < k; ++j) {
      const double a = av[static_cast<std::size_t>(g) * k + j];
      const double* vrow = vv.data() + (static_cast<std::size_t>(g) * k + j) * dv;
      for (int q = 0; q < dv; ++q) orow[q] += a * vrow[q];
    }
  }
  const int vid = values.id, aid = alpha.id;
  Tensor y = values.tape->make("attention_pool", {groups, dv}, std::move(out), {vid, aid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [vid, aid, yid, groups, k, dv](Tape& t) {
      const Buffer& g = t.grad(yid);
      const Buffer &vv = t.val(vid), &av = t.val(aid);
      if (!t.grad(vid).empty()) {
        Buffer& gv = t.grad(vid);
        for (int gi = 0; gi < groups; ++gi) {
          const double* grow = g.data() + static_cast<std::size_t>(gi) * dv;
          for (int j = 0; j < k; ++j) {
            const double a = av[static_cast<std::size_t>(gi) * k + j];
            double* gvrow = gv.data() + (static_cast<std::size_t>(gi) * k + j) * dv;
            for (int q = 0; q < dv; ++q) gvrow[q] += a * grow[q];
          }
        }
      }
      if (!t.grad(aid).empty()) {
        Buffer& ga = t.grad(aid);
        for (int gi = 0; gi < groups; ++gi) {
          const double* grow = g.data() + static_cast<std::size_t>(gi) * dv;
          for (int j = 0; j < k; ++j) {
            const double* vrow = vv.data() + (static_cast<std::size_t>(gi) * k + j) * dv;
            double s = 0.0;
            for (int q = 0; q < dv; ++q) s += grow[q] * vrow[q];
            ga[static_cast<std::size_t>(gi) * k + j] += s;
          }
        }
      }
    };
  return y;
}

/// Scalar combination sum_i w_i * x_i of scalar tensors.
inline Tensor weighted_sum(const std::vector<Tensor>& xs, const std::vector<double>& weights) {
  if (xs.empty() || xs.size() != weights.size())
    throw ShapeError("weighted_sum needs matching nonempty operands");
  double s = 0.0;
  std::vector<int> ids(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    detail::same_tape(xs[0], xs[i]);
    if (xs[i].size() != 1) throw ShapeError("weighted_sum operands must be scalars");
    s += weights[i] * xs[i].scalar();
    ids[i] = xs[i].id;
  }
  Tape& tape = *xs[0].tape;
  bool needs = false;
  if (tape.grad_enabled)
    for (int pid : ids) needs = needs || tape.needs_grad(pid);
  Tensor y = tape.make("weighted_sum", {1}, Buffer{s}, {}, nullptr);
  const int yid = y.id;
  if (needs) {
    tape.nodes()[yid].needs_grad = true;
    tape.nodes()[yid].grad.assign(1, 0.0);
    auto w = std::make_shared<std::vector<double>>(weights);
    tape.nodes()[yid].backward = [ids, yid, w](Tape& t) {
      const double g = t.grad(yid)[0];
      for (std::size_t i = 0; i < ids.size(); ++i) {
        Buffer& gx = t.grad(ids[i]);
        if (!gx.empty()) gx[0] += g * (*w)[i];
      }
    };
  }
  return y;
}

/// y_i = mask_i ? x_i : fill. Gradient passes only where the mask is set.
inline Tensor mask_fill(const Tensor& x, const Mask& mask, double fill) {
  if (mask.size() != x.size()) throw ShapeError("mask_fill size mismatch");
  Buffer out(x.size());
  const Buffer& xv = *x.value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] ? xv[i] : fill;
  const int xid = x.id;
  auto mask_copy = std::make_shared<Mask>(mask);
  Tensor y = x.tape->make("mask_fill", x.shape, std::move(out), {xid}, nullptr);
  const int yid = y.id;
  if (y.tape->needs_grad(yid))
    y.tape->nodes()[yid].backward = [xid, yid, mask_copy](Tape& t) {
      const Buffer& g = t.grad(yid);
      Buffer& gx = t.grad(xid);
      for (std::size_t i = 0; i < gx.size(); ++i)
        if ((*mask_copy)[i]) gx[i] += g[i];
    };
  return y;
}

}  // namespace great::ad
