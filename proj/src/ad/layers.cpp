#include "openrel/ad/layers.hpp"

namespace openrel::ad {

void init_linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  store.add(name + ".w", xavier_uniform(in, out, rng));
  store.add(name + ".b", Mat::Zero(1, out));
}

Var apply_linear(Graph& g, ParamStore& store, const std::string& name, Var x) {
  return linear(x, g.param(store.get(name + ".w")), g.param(store.get(name + ".b")));
}

void init_norm(ParamStore& store, const std::string& name, Eigen::Index dim) {
  store.add(name + ".g", Mat::Ones(1, dim));
  store.add(name + ".b", Mat::Zero(1, dim));
}

Var apply_norm(Graph& g, ParamStore& store, const std::string& name, Var x) {
  return layer_norm(x, g.param(store.get(name + ".g")), g.param(store.get(name + ".b")));
}

void init_ffn(ParamStore& store, const std::string& name, Eigen::Index dim, Eigen::Index hidden, std::mt19937_64& rng) {
  init_linear(store, name + ".fc1", dim, hidden, rng);
  init_linear(store, name + ".fc2", hidden, dim, rng);
}

Var apply_ffn(Graph& g, ParamStore& store, const std::string& name, Var x) {
  return apply_linear(g, store, name + ".fc2", gelu(apply_linear(g, store, name + ".fc1", x)));
}

}  // namespace openrel::ad
