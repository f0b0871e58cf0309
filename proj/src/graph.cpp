#include "mcg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace mcg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  bool any = false;
  for (const auto& p : n->parents) any = any || p->requires_grad;
  n->requires_grad = any;
  if (any) n->backward_fn = std::move(fn);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    fail(std::string(op) + " shape mismatch: " + a->value.shape_str() + " vs " +
         b->value.shape_str());
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (!grad_touched) {
    grad = Tensor::zeros(value.rows(), value.cols());
    grad_touched = true;
  }
  return grad;
}

void Node::zero_grad() {
  grad = Tensor();
  grad_touched = false;
}

Var leaf(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

void backward(const Var& root) {
  if (root->value.rows() != 1 || root->value.cols() != 1)
    fail("backward requires a scalar root, got " + root->value.shape_str());
  // Iterative post-order topological sort over the DAG.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad_touched) n->backward_fn(*n);
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  out.add_inplace(b->value);
  return make_node(std::move(out), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().add_inplace(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->ensure_grad().add_inplace(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().add_inplace(n.grad);
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& g = n.parents[0]->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return make_node(std::move(out), {a}, [c](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += c * n.grad[i];
  });
}

Var add_const(const Var& a, double c) {
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] += c;
  return make_node(std::move(out), {a},
                   [](Node& n) { n.parents[0]->ensure_grad().add_inplace(n.grad); });
}

Var smul(const Var& s, const Var& a) {
  if (s->value.rows() != 1 || s->value.cols() != 1) fail("smul scalar must be 1x1");
  const double sv = s->value[0];
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] *= sv;
  return make_node(std::move(out), {s, a}, [](Node& n) {
    const double sv = n.parents[0]->value[0];
    const Tensor& av = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      double acc = 0.0;
      for (size_t i = 0; i < av.size(); ++i) acc += n.grad[i] * av[i];
      n.parents[0]->ensure_grad()[0] += acc;
    }
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += sv * n.grad[i];
    }
  });
}

namespace {
Var matmul_impl(const Var& a, const Var& b, bool ta, bool tb) {
  Tensor out = matmul_values(a->value, b->value, ta, tb);
  return make_node(std::move(out), {a, b}, [ta, tb](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    // d(A@B): dA += dC B^T, dB += A^T dC, adjusted for the flags.
    if (n.parents[0]->requires_grad) {
      Tensor& ga = n.parents[0]->ensure_grad();
      if (!ta)
        matmul_acc(ga, n.grad, bv, false, !tb);
      else
        matmul_acc(ga, bv, n.grad, tb, true);
    }
    if (n.parents[1]->requires_grad) {
      Tensor& gb = n.parents[1]->ensure_grad();
      if (!tb)
        matmul_acc(gb, av, n.grad, !ta, false);
      else
        matmul_acc(gb, n.grad, av, true, ta);
    }
  });
}
}  // namespace

Var matmul(const Var& a, const Var& b) { return matmul_impl(a, b, false, false); }
Var matmul_nt(const Var& a, const Var& b) { return matmul_impl(a, b, false, true); }
Var matmul_tn(const Var& a, const Var& b) { return matmul_impl(a, b, true, false); }

Var transpose(const Var& a) {
  return make_node(a->value.transposed(), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int r = 0; r < n.grad.rows(); ++r)
      for (int c = 0; c < n.grad.cols(); ++c) g(c, r) += n.grad(r, c);
  });
}

Var add_rowvec(const Var& a, const Var& v) {
  if (v->value.rows() != 1 || v->value.cols() != a->value.cols())
    fail("add_rowvec shape mismatch: " + a->value.shape_str() + " vs " + v->value.shape_str());
  Tensor out = a->value;
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) += v->value(0, c);
  return make_node(std::move(out), {a, v}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().add_inplace(n.grad);
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      for (int r = 0; r < n.grad.rows(); ++r)
        for (int c = 0; c < n.grad.cols(); ++c) g(0, c) += n.grad(r, c);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) fail("concat_rows of nothing");
  const int cols = parts[0]->value.cols();
  int rows = 0;
  for (const auto& p : parts) {
    if (p->value.cols() != cols) fail("concat_rows column mismatch");
    rows += p->value.rows();
  }
  Tensor out(rows, cols);
  int at = 0;
  for (const auto& p : parts) {
    for (int r = 0; r < p->value.rows(); ++r)
      for (int c = 0; c < cols; ++c) out(at + r, c) = p->value(r, c);
    at += p->value.rows();
  }
  return make_node(std::move(out), parts, [](Node& n) {
    int at = 0;
    for (auto& p : n.parents) {
      if (p->requires_grad) {
        Tensor& g = p->ensure_grad();
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) g(r, c) += n.grad(at + r, c);
      }
      at += p->value.rows();
    }
  });
}

Var slice_rows(const Var& a, int first, int count) {
  if (first < 0 || count < 0 || first + count > a->value.rows()) fail("slice_rows out of range");
  Tensor out(count, a->value.cols());
  for (int r = 0; r < count; ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) = a->value(first + r, c);
  return make_node(std::move(out), {a}, [first](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int r = 0; r < n.grad.rows(); ++r)
      for (int c = 0; c < n.grad.cols(); ++c) g(first + r, c) += n.grad(r, c);
  });
}

Var gather_rows(const Var& a, std::vector<int> indices) {
  Tensor out(int(indices.size()), a->value.cols());
  for (size_t r = 0; r < indices.size(); ++r) {
    const int src = indices[r];
    if (src < 0 || src >= a->value.rows()) fail("gather_rows index out of range");
    for (int c = 0; c < out.cols(); ++c) out(int(r), c) = a->value(src, c);
  }
  return make_node(std::move(out), {a}, [idx = std::move(indices)](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (size_t r = 0; r < idx.size(); ++r)
      for (int c = 0; c < n.grad.cols(); ++c) g(idx[r], c) += n.grad(int(r), c);
  });
}

Var pick(const Var& a, int r, int c) {
  if (r < 0 || r >= a->value.rows() || c < 0 || c >= a->value.cols()) fail("pick out of range");
  return make_node(Tensor::scalar(a->value(r, c)), {a}, [r, c](Node& n) {
    n.parents[0]->ensure_grad()(r, c) += n.grad[0];
  });
}

Var diag(const Var& a) {
  if (a->value.rows() != a->value.cols()) fail("diag requires a square matrix");
  const int n = a->value.rows();
  Tensor out(n, 1);
  for (int i = 0; i < n; ++i) out(i, 0) = a->value(i, i);
  return make_node(std::move(out), {a}, [](Node& n_) {
    Tensor& g = n_.parents[0]->ensure_grad();
    for (int i = 0; i < n_.grad.rows(); ++i) g(i, i) += n_.grad(i, 0);
  });
}

Var sum_all(const Var& a) {
  double s = 0.0;
  for (size_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  return make_node(Tensor::scalar(s), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
  });
}

namespace {
Var unary(const Var& a, double (*f)(double), double (*df)(double, double)) {
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(out[i]);
  return make_node(std::move(out), {a}, [f, df](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const Tensor& x = n.parents[0]->value;
    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * df(x[i], n.value[i]);
  });
}
}  // namespace

Var tanh_v(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid_v(const Var& a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var gelu_v(const Var& a) {
  return unary(a,
               [](double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475)); },
               [](double x, double) {
                 const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475));
                 const double pdf = 0.3989422804014327 * std::exp(-0.5 * x * x);
                 return cdf + x * pdf;
               });
}

Var exp_v(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log_v(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var recip_v(const Var& a) {
  return unary(a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Var clamp_v(const Var& a, double lo, double hi) {
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(out[i], lo), hi);
  return make_node(std::move(out), {a}, [lo, hi](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const Tensor& x = n.parents[0]->value;
    for (size_t i = 0; i < g.size(); ++i)
      if (x[i] > lo && x[i] < hi) g[i] += n.grad[i];
  });
}

namespace {
void softmax_row_values(const double* in, const double* mask, int n, double* out) {
  double mx = kNegInf;
  for (int i = 0; i < n; ++i)
    if (!mask || mask[i] != 0.0) mx = std::max(mx, in[i]);
  if (mx == kNegInf) fail("softmax row has no allowed entries");
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    const bool allowed = !mask || mask[i] != 0.0;
    out[i] = allowed ? std::exp(in[i] - mx) : 0.0;
    denom += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= denom;
}
}  // namespace

Var softmax_rows(const Var& a, const Tensor* mask) {
  if (mask && !mask->same_shape(a->value)) fail("softmax mask shape mismatch");
  Tensor out(a->value.rows(), a->value.cols());
  const int n = a->value.cols();
  for (int r = 0; r < out.rows(); ++r)
    softmax_row_values(a->value.row_ptr(r), mask ? mask->row_ptr(r) : nullptr, n, out.row_ptr(r));
  return make_node(std::move(out), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int r = 0; r < n.value.rows(); ++r) {
      double dot = 0.0;
      for (int c = 0; c < n.value.cols(); ++c) dot += n.grad(r, c) * n.value(r, c);
      for (int c = 0; c < n.value.cols(); ++c)
        g(r, c) += (n.grad(r, c) - dot) * n.value(r, c);
    }
  });
}

Var log_softmax_rows(const Var& a, const Tensor* mask) {
  if (mask && !mask->same_shape(a->value)) fail("softmax mask shape mismatch");
  const int n = a->value.cols();
  Tensor out(a->value.rows(), n);
  for (int r = 0; r < out.rows(); ++r) {
    const double* in = a->value.row_ptr(r);
    const double* m = mask ? mask->row_ptr(r) : nullptr;
    double mx = kNegInf;
    for (int i = 0; i < n; ++i)
      if (!m || m[i] != 0.0) mx = std::max(mx, in[i]);
    if (mx == kNegInf) fail("softmax row has no allowed entries");
    double denom = 0.0;
    for (int i = 0; i < n; ++i)
      if (!m || m[i] != 0.0) denom += std::exp(in[i] - mx);
    const double lse = mx + std::log(denom);
    for (int i = 0; i < n; ++i) out(r, i) = (!m || m[i] != 0.0) ? in[i] - lse : kNegInf;
  }
  Tensor maskcopy = mask ? *mask : Tensor();
  return make_node(std::move(out), {a}, [maskcopy](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const bool has_mask = !maskcopy.empty();
    for (int r = 0; r < n.value.rows(); ++r) {
      double gsum = 0.0;
      for (int c = 0; c < n.value.cols(); ++c)
        if (!has_mask || maskcopy(r, c) != 0.0) gsum += n.grad(r, c);
      for (int c = 0; c < n.value.cols(); ++c) {
        if (has_mask && maskcopy(r, c) == 0.0) continue;
        g(r, c) += n.grad(r, c) - std::exp(n.value(r, c)) * gsum;
      }
    }
  });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
  const int cols = a->value.cols();
  if (gain->value.rows() != 1 || gain->value.cols() != cols || !gain->value.same_shape(bias->value))
    fail("layer_norm gain/bias shape mismatch");
  Tensor out(a->value.rows(), cols);
  Tensor xhat(a->value.rows(), cols);
  std::vector<double> inv_sigma(a->value.rows());
  for (int r = 0; r < out.rows(); ++r) {
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += a->value(r, c);
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double d = a->value(r, c) - mean;
      var += d * d;
    }
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = inv;
    for (int c = 0; c < cols; ++c) {
      xhat(r, c) = (a->value(r, c) - mean) * inv;
      out(r, c) = xhat(r, c) * gain->value(0, c) + bias->value(0, c);
    }
  }
  return make_node(std::move(out), {a, gain, bias},
                   [xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Node& n) {
    const int cols = n.value.cols();
    const Tensor& gv = n.parents[1]->value;
    for (int r = 0; r < n.value.rows(); ++r) {
      if (n.parents[1]->requires_grad) {
        Tensor& gg = n.parents[1]->ensure_grad();
        for (int c = 0; c < cols; ++c) gg(0, c) += n.grad(r, c) * xhat(r, c);
      }
      if (n.parents[2]->requires_grad) {
        Tensor& gb = n.parents[2]->ensure_grad();
        for (int c = 0; c < cols; ++c) gb(0, c) += n.grad(r, c);
      }
      if (n.parents[0]->requires_grad) {
        Tensor& gx = n.parents[0]->ensure_grad();
        double m1 = 0.0, m2 = 0.0;  // means of g*dy and g*dy*xhat
        for (int c = 0; c < cols; ++c) {
          const double gd = n.grad(r, c) * gv(0, c);
          m1 += gd;
          m2 += gd * xhat(r, c);
        }
        m1 /= cols;
        m2 /= cols;
        for (int c = 0; c < cols; ++c) {
          const double gd = n.grad(r, c) * gv(0, c);
          gx(r, c) += (gd - m1 - xhat(r, c) * m2) * inv_sigma[r];
        }
      }
    }
  });
}

Var l2_normalize_rows(const Var& a, double eps) {
  const int cols = a->value.cols();
  Tensor out(a->value.rows(), cols);
  std::vector<double> norms(a->value.rows());
  for (int r = 0; r < out.rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += a->value(r, c) * a->value(r, c);
    norms[r] = std::sqrt(s);
    const double inv = 1.0 / (norms[r] + eps);
    for (int c = 0; c < cols; ++c) out(r, c) = a->value(r, c) * inv;
  }
  return make_node(std::move(out), {a}, [norms = std::move(norms), eps](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const Tensor& x = n.parents[0]->value;
    const int cols = n.value.cols();
    for (int r = 0; r < n.value.rows(); ++r) {
      const double s = norms[r] + eps;
      double xdot = 0.0;
      for (int c = 0; c < cols; ++c) xdot += x(r, c) * n.grad(r, c);
      const double k = norms[r] > 0.0 ? xdot / (s * s * norms[r]) : 0.0;
      for (int c = 0; c < cols; ++c) g(r, c) += n.grad(r, c) / s - x(r, c) * k;
    }
  });
}

Var attention_heads(const Var& q, const Var& k, const Var& v, int n_heads, const Tensor& mask) {
  const int tq = q->value.rows(), tk = k->value.rows(), d = q->value.cols();
  if (k->value.cols() != d || v->value.cols() != d) fail("attention dim mismatch");
  if (v->value.rows() != tk) fail("attention key/value length mismatch");
  if (n_heads < 1 || d % n_heads != 0) fail("attention heads must divide dim");
  if (mask.rows() != tq || mask.cols() != tk) fail("attention mask shape mismatch");
  const int dh = d / n_heads;
  const double sc = 1.0 / std::sqrt(double(dh));

  // Keep the per-head attention distributions for the backward pass.
  auto probs = std::make_shared<std::vector<Tensor>>();
  probs->reserve(n_heads);
  Tensor out(tq, d);
  Tensor scores(tq, tk);
  for (int h = 0; h < n_heads; ++h) {
    const int off = h * dh;
    for (int i = 0; i < tq; ++i)
      for (int j = 0; j < tk; ++j) {
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += q->value(i, off + c) * k->value(j, off + c);
        scores(i, j) = s * sc;
      }
    Tensor p(tq, tk);
    for (int i = 0; i < tq; ++i) softmax_row_values(scores.row_ptr(i), mask.row_ptr(i), tk, p.row_ptr(i));
    for (int i = 0; i < tq; ++i)
      for (int c = 0; c < dh; ++c) {
        double s = 0.0;
        for (int j = 0; j < tk; ++j) s += p(i, j) * v->value(j, off + c);
        out(i, off + c) = s;
      }
    probs->push_back(std::move(p));
  }
  return make_node(std::move(out), {q, k, v}, [probs, n_heads, dh, sc](Node& n) {
    const Tensor& qv = n.parents[0]->value;
    const Tensor& kv = n.parents[1]->value;
    const Tensor& vv = n.parents[2]->value;
    const int tq = qv.rows(), tk = kv.rows();
    Tensor* gq = n.parents[0]->requires_grad ? &n.parents[0]->ensure_grad() : nullptr;
    Tensor* gk = n.parents[1]->requires_grad ? &n.parents[1]->ensure_grad() : nullptr;
    Tensor* gv = n.parents[2]->requires_grad ? &n.parents[2]->ensure_grad() : nullptr;
    for (int h = 0; h < n_heads; ++h) {
      const int off = h * dh;
      const Tensor& p = (*probs)[h];
      // dV += P^T dO
      if (gv)
        for (int j = 0; j < tk; ++j)
          for (int c = 0; c < dh; ++c) {
            double s = 0.0;
            for (int i = 0; i < tq; ++i) s += p(i, j) * n.grad(i, off + c);
            (*gv)(j, off + c) += s;
          }
      if (!gq && !gk) continue;
      for (int i = 0; i < tq; ++i) {
        // dP_i = dO_i V^T ; dS_i = (dP_i - <dP_i, P_i>) * P_i
        double dot = 0.0;
        std::vector<double> dp(tk);
        for (int j = 0; j < tk; ++j) {
          double s = 0.0;
          for (int c = 0; c < dh; ++c) s += n.grad(i, off + c) * vv(j, off + c);
          dp[j] = s;
          dot += s * p(i, j);
        }
        for (int j = 0; j < tk; ++j) {
          const double ds = (dp[j] - dot) * p(i, j) * sc;
          if (ds == 0.0) continue;
          if (gq)
            for (int c = 0; c < dh; ++c) (*gq)(i, off + c) += ds * kv(j, off + c);
          if (gk)
            for (int c = 0; c < dh; ++c) (*gk)(j, off + c) += ds * qv(i, off + c);
        }
      }
    }
  });
}

Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets,
                       const std::vector<bool>& supervised) {
  const int rows = logits->value.rows(), cols = logits->value.cols();
  if (int(targets.size()) != rows || int(supervised.size()) != rows)
    fail("cross_entropy_rows target/mask length mismatch");
  int count = 0;
  for (int r = 0; r < rows; ++r)
    if (supervised[r]) {
      if (targets[r] < 0 || targets[r] >= cols) fail("cross_entropy_rows target out of range");
      ++count;
    }
  if (count == 0) fail("no supervised positions");
  // Stabilized log-softmax per supervised row; keep probs for backward.
  auto probs = std::make_shared<Tensor>(rows, cols);
  double loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (!supervised[r]) continue;
    const double* in = logits->value.row_ptr(r);
    double mx = in[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double denom = 0.0;
    for (int c = 0; c < cols; ++c) denom += std::exp(in[c] - mx);
    const double lse = mx + std::log(denom);
    for (int c = 0; c < cols; ++c) (*probs)(r, c) = std::exp(in[c] - lse);
    loss -= in[targets[r]] - lse;
  }
  loss /= count;
  return make_node(Tensor::scalar(loss), {logits},
                   [probs, targets, supervised, count](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const double w = n.grad[0] / count;
    for (int r = 0; r < g.rows(); ++r) {
      if (!supervised[r]) continue;
      for (int c = 0; c < g.cols(); ++c)
        g(r, c) += w * ((*probs)(r, c) - (c == targets[r] ? 1.0 : 0.0));
    }
  });
}

}  // namespace mcg
