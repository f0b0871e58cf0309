#include "mcg/nn.hpp"

namespace mcg {

Var ParameterTree::create(const std::string& name, Tensor init) {
  if (params_.count(name)) fail("duplicate parameter name: " + name);
  Var v = leaf(std::move(init));
  params_.emplace(name, v);
  return v;
}

Var ParameterTree::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) fail("unknown parameter: " + name);
  return it->second;
}

size_t ParameterTree::total_entries() const {
  size_t n = 0;
  for (const auto& [name, v] : params_) n += v->value.size();
  return n;
}

void ParameterTree::zero_grads() {
  for (auto& [name, v] : params_) v->zero_grad();
}

std::vector<std::string> ParameterTree::touched() const {
  std::vector<std::string> out;
  for (const auto& [name, v] : params_)
    if (v->grad_touched) out.push_back(name);
  return out;
}

std::vector<std::string> ParameterTree::names_under(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, v] : params_)
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  return out;
}

Tensor init_normal(Rng& rng, int rows, int cols, double std_dev) {
  Tensor t(rows, cols);
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * std_dev;
  return t;
}

LinearLayer::LinearLayer(ParameterTree& tree, const std::string& prefix, int in, int out,
                         Rng& rng) {
  weight = tree.create(prefix + ".weight", init_normal(rng, in, out));
  bias = tree.create(prefix + ".bias", Tensor::zeros(1, out));
}

LayerNorm::LayerNorm(ParameterTree& tree, const std::string& prefix, int dim) {
  gain = tree.create(prefix + ".gain", Tensor::ones(1, dim));
  bias = tree.create(prefix + ".bias", Tensor::zeros(1, dim));
}

AttentionBlock::AttentionBlock(ParameterTree& tree, const std::string& prefix, int query_dim,
                               int memory_dim, int heads, Rng& rng)
    : q(tree, prefix + ".q", query_dim, query_dim, rng),
      k(tree, prefix + ".k", memory_dim, query_dim, rng),
      v(tree, prefix + ".v", memory_dim, query_dim, rng),
      o(tree, prefix + ".o", query_dim, query_dim, rng),
      n_heads(heads) {
  if (query_dim % heads != 0) fail("attention width not divisible by head count");
}

Var AttentionBlock::apply(const Var& queries, const Var& memory, const Tensor& mask) const {
  Var att = attention_heads(q.apply(queries), k.apply(memory), v.apply(memory), n_heads, mask);
  return o.apply(att);
}

Var AttentionBlock::apply2(const Var& queries, const Var& mem_a, const Var& mem_b,
                           const Tensor& mask, const LinearLayer& k_b,
                           const LinearLayer& v_b) const {
  Var keys = concat_rows({k.apply(mem_a), k_b.apply(mem_b)});
  Var vals = concat_rows({v.apply(mem_a), v_b.apply(mem_b)});
  return o.apply(attention_heads(q.apply(queries), keys, vals, n_heads, mask));
}

FeedForward::FeedForward(ParameterTree& tree, const std::string& prefix, int dim, int hidden,
                         Rng& rng)
    : fc1(tree, prefix + ".fc1", dim, hidden, rng), fc2(tree, prefix + ".fc2", hidden, dim, rng) {}

Tensor full_mask(int tq, int tk) { return Tensor::ones(tq, tk); }

Tensor causal_mask(int t) {
  Tensor m(t, t);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j <= i; ++j) m(i, j) = 1.0;
  return m;
}

Tensor key_padding_mask(int tq, const std::vector<bool>& key_allowed) {
  Tensor m(tq, int(key_allowed.size()));
  for (int i = 0; i < tq; ++i)
    for (size_t j = 0; j < key_allowed.size(); ++j) m(i, int(j)) = key_allowed[j] ? 1.0 : 0.0;
  return m;
}

}  // namespace mcg
