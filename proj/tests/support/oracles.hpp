#pragma once

// Brute-force loop oracles used to cross-check the vectorized/graph
// implementations. Everything here works on plain Tensors with explicit
// loops and must stay independent of the graph engine.

#include <cmath>
#include <vector>

#include "mcg/tensor.hpp"

namespace mcg::test {

inline Tensor oracle_matmul(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Tensor oracle_linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = oracle_matmul(x, w);
  for (int i = 0; i < y.rows(); ++i)
    for (int j = 0; j < y.cols(); ++j) y(i, j) += b(0, j);
  return y;
}

inline Tensor oracle_layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                               double eps = 1e-5) {
  Tensor y(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < x.cols(); ++c) mean += x(r, c);
    mean /= x.cols();
    for (int c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= x.cols();
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < x.cols(); ++c)
      y(r, c) = (x(r, c) - mean) * inv * gain(0, c) + bias(0, c);
  }
  return y;
}

inline Tensor oracle_gelu(const Tensor& x) {
  Tensor y = x;
  for (size_t i = 0; i < y.size(); ++i)
    y[i] = 0.5 * y[i] * (1.0 + std::erf(y[i] / std::sqrt(2.0)));
  return y;
}

inline std::vector<double> oracle_softmax(const std::vector<double>& in) {
  double mx = in[0];
  for (double v : in) mx = std::max(mx, v);
  std::vector<double> out(in.size());
  double denom = 0.0;
  for (size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

/// Masked multi-head attention over already-projected q/k/v.
inline Tensor oracle_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                               const Tensor& mask) {
  const int dh = q.cols() / heads;
  Tensor out(q.rows(), q.cols());
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < q.rows(); ++i) {
      std::vector<double> scores;
      std::vector<int> keys;
      for (int j = 0; j < k.rows(); ++j) {
        if (mask(i, j) == 0.0) continue;
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += q(i, h * dh + c) * k(j, h * dh + c);
        scores.push_back(s / std::sqrt(double(dh)));
        keys.push_back(j);
      }
      const auto p = oracle_softmax(scores);
      for (int c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (size_t j = 0; j < keys.size(); ++j) acc += p[j] * v(keys[j], h * dh + c);
        out(i, h * dh + c) = acc;
      }
    }
  return out;
}

/// Full q/k/v/o attention sub-layer with projections.
struct OracleAttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

inline Tensor oracle_attention_layer(const Tensor& queries, const Tensor& memory,
                                     const OracleAttentionWeights& w, int heads,
                                     const Tensor& mask) {
  Tensor att = oracle_attention(oracle_linear(queries, w.wq, w.bq),
                                oracle_linear(memory, w.wk, w.bk),
                                oracle_linear(memory, w.wv, w.bv), heads, mask);
  return oracle_linear(att, w.wo, w.bo);
}

/// In-batch symmetric InfoNCE from a precomputed similarity matrix.
inline double oracle_icl(const Tensor& s, double tau) {
  const int b = s.rows();
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    std::vector<double> row(static_cast<size_t>(b)), col(static_cast<size_t>(b));
    for (int j = 0; j < b; ++j) {
      row[size_t(j)] = s(i, j) / tau;
      col[size_t(j)] = s(j, i) / tau;
    }
    total -= std::log(oracle_softmax(row)[size_t(i)]);
    total -= std::log(oracle_softmax(col)[size_t(i)]);
  }
  return total / (2.0 * b);
}

inline double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b,
                            double eps = 1e-12) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / ((std::sqrt(na) + eps) * (std::sqrt(nb) + eps));
}

/// Token-grained contrastive loss, four nested loops (pairs, tokens,
/// denominator tokens, both directions), straight from the formulas.
/// alpha/beta carry one weight per content token of each pair.
inline double oracle_tcl(const std::vector<Tensor>& video_tokens,
                         const std::vector<Tensor>& text_tokens, const Tensor& wt,
                         const Tensor& bt, const Tensor& wv, const Tensor& bv,
                         const std::vector<std::vector<double>>& alpha,
                         const std::vector<std::vector<double>>& beta, double tau) {
  const size_t n = video_tokens.size();
  auto map_rows = [](const Tensor& x, const Tensor& w, const Tensor& b) {
    return oracle_linear(x, w, b);
  };
  auto row = [](const Tensor& t, int r) {
    std::vector<double> out(static_cast<size_t>(t.cols()));
    for (int c = 0; c < t.cols(); ++c) out[size_t(c)] = t(r, c);
    return out;
  };
  // One direction: `tok` rows query the `mem` buffer; responses are the
  // attention reads, contrasted within the pair.
  auto direction = [&](const Tensor& tok, const Tensor& mem,
                       const std::vector<double>& weights) {
    const int kk = tok.rows(), jj = mem.rows();
    // responses r_k
    std::vector<std::vector<double>> resp(static_cast<size_t>(kk));
    for (int k = 0; k < kk; ++k) {
      std::vector<double> scores(static_cast<size_t>(jj));
      for (int j = 0; j < jj; ++j) {
        double s = 0.0;
        for (int c = 0; c < mem.cols(); ++c) s += std::tanh(mem(j, c)) * std::tanh(tok(k, c));
        scores[size_t(j)] = s;
      }
      const auto rho = oracle_softmax(scores);
      std::vector<double> r(static_cast<size_t>(mem.cols()), 0.0);
      for (int j = 0; j < jj; ++j)
        for (int c = 0; c < mem.cols(); ++c) r[size_t(c)] += rho[size_t(j)] * mem(j, c);
      resp[size_t(k)] = std::move(r);
    }
    double acc = 0.0;
    for (int k = 0; k < kk; ++k) {
      std::vector<double> fwd(static_cast<size_t>(kk)), bwd(static_cast<size_t>(kk));
      for (int j = 0; j < kk; ++j) {
        fwd[size_t(j)] = oracle_cosine(row(tok, k), resp[size_t(j)]) / tau;
        bwd[size_t(j)] = oracle_cosine(resp[size_t(k)], row(tok, j)) / tau;
      }
      const double l = -std::log(oracle_softmax(fwd)[size_t(k)]) -
                       std::log(oracle_softmax(bwd)[size_t(k)]);
      acc += weights[size_t(k)] * l;
    }
    return acc;
  };
  double tvc = 0.0, tlc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    Tensor u = map_rows(text_tokens[i], wt, bt);
    Tensor m = map_rows(video_tokens[i], wv, bv);
    tvc += direction(u, m, alpha[i]);
    tlc += direction(m, u, beta[i]);
  }
  tvc /= 2.0 * double(n);
  tlc /= 2.0 * double(n);
  return 0.5 * (tvc + tlc);
}

}  // namespace mcg::test
