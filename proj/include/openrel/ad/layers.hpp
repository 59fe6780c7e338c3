#pragma once

#include <random>
#include <string>

#include "openrel/ad/autograd.hpp"
#include "openrel/ad/params.hpp"

namespace openrel::ad {

// "<name>.w" (in x out) and "<name>.b" (1 x out).
void init_linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng);
Var apply_linear(Graph& g, ParamStore& store, const std::string& name, Var x);

// "<name>.g" initialized to ones, "<name>.b" to zeros.
void init_norm(ParamStore& store, const std::string& name, Eigen::Index dim);
Var apply_norm(Graph& g, ParamStore& store, const std::string& name, Var x);

// Two-layer GELU perceptron "<name>.fc1", "<name>.fc2".
void init_ffn(ParamStore& store, const std::string& name, Eigen::Index dim, Eigen::Index hidden, std::mt19937_64& rng);
Var apply_ffn(Graph& g, ParamStore& store, const std::string& name, Var x);

}  // namespace openrel::ad
