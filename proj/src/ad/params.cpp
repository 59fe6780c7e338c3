#include "openrel/ad/params.hpp"

#include <cmath>
#include <stdexcept>

namespace openrel::ad {

bool has_prefix(std::string_view name, std::string_view module) {
  return name.size() > module.size() && name.substr(0, module.size()) == module && name[module.size()] == '.';
}

Parameter& ParamStore::add(const std::string& name, Mat value) {
  auto [it, inserted] = params_.try_emplace(name, name, std::move(value));
  if (!inserted) throw std::invalid_argument("duplicate parameter name " + name);
  return it->second;
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

void ParamStore::set_frozen(std::string_view module, bool frozen) {
  for (auto& [name, p] : params_) {
    if (has_prefix(name, module)) p.frozen = frozen;
  }
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.zero_grad();
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& [_, p] : params_) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Mat xavier_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Mat normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void AdamW::step(ParamStore& store, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : store.items()) {
    if (p.frozen) continue;
    auto [mit, _m] = m_.try_emplace(name, Mat::Zero(p.value.rows(), p.value.cols()));
    auto [vit, _v] = v_.try_emplace(name, Mat::Zero(p.value.rows(), p.value.cols()));
    Mat& m = mit->second;
    Mat& v = vit->second;
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * p.grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
    // Row-vector parameters (biases, norm gains, single queries) are not decayed.
    if (p.value.rows() > 1) p.value *= (1.0 - lr * cfg_.weight_decay);
    p.value.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
  }
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  const double norm = store.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& [_, p] : store.items()) p.grad *= s;
  }
  return norm;
}

}  // namespace openrel::ad
