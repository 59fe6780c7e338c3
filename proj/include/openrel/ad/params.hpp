#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "openrel/ad/autograd.hpp"

namespace openrel::ad {

// Named parameter tensors keyed by module path ("relq.layer0.sa.wq").
// std::map keeps iteration order stable and references valid.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Mat value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  // Parameters whose name starts with "<module>." are frozen or unfrozen.
  void set_frozen(std::string_view module, bool frozen);
  void zero_grad();
  double grad_norm() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  std::map<std::string, Parameter>& items() { return params_; }
  const std::map<std::string, Parameter>& items() const { return params_; }

 private:
  std::map<std::string, Parameter> params_;
};

// Initializers. All draw from the supplied engine so a seed fixes every value.
Mat xavier_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);
Mat normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

bool has_prefix(std::string_view name, std::string_view module);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-2;
};

// Decoupled weight decay Adam. Moments are keyed by parameter name so they can
// be checkpointed alongside the values.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}
  void step(ParamStore& store, double lr);
  std::int64_t steps() const { return t_; }

  std::map<std::string, Mat>& first_moments() { return m_; }
  std::map<std::string, Mat>& second_moments() { return v_; }
  const std::map<std::string, Mat>& first_moments() const { return m_; }
  const std::map<std::string, Mat>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Mat> m_;
  std::map<std::string, Mat> v_;
};

// Scales every gradient so the global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

}  // namespace openrel::ad
