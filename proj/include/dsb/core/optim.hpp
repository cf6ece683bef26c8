#pragma once

#include <cstdint>
#include <vector>

#include "dsb/core/tensor.hpp"

namespace dsb {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.95;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// AdamW with bias correction and decoupled weight decay.
///
/// Moment tensors are created on construction to match the parameter shapes.
/// A gradient containing NaN aborts the step before any parameter is touched.
class AdamW {
 public:
  AdamW(const std::vector<Tensor>& params, AdamWConfig config);

  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr);
  std::uint64_t steps() const { return t_; }
  const std::vector<Tensor>& first_moment() const { return m_; }
  const std::vector<Tensor>& second_moment() const { return v_; }

 private:
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

/// Exponential moving average of a parameter list.
class Ema {
 public:
  Ema(const std::vector<Tensor>& params, double decay = 0.999);

  void update(const std::vector<Tensor>& params);
  double decay() const { return decay_; }
  const std::vector<Tensor>& shadow() const { return shadow_; }
  std::vector<Tensor>& shadow() { return shadow_; }

 private:
  double decay_;
  std::vector<Tensor> shadow_;
};

}  // namespace dsb
