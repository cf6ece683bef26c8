#include "dsb/core/optim.hpp"

#include <cmath>

#include "dsb/core/error.hpp"

namespace dsb {

namespace {

void check_shapes(const std::vector<Tensor>& expected, const std::vector<Tensor>& got,
                  const char* who) {
  if (expected.size() != got.size()) {
    throw ValidationError(std::string(who) + ": parameter count mismatch");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].shape() != got[i].shape()) {
      throw ValidationError(std::string(who) + ": shape mismatch at tensor " + std::to_string(i) +
                            " (" + shape_string(expected[i].shape()) + " vs " +
                            shape_string(got[i].shape()) + ")");
    }
  }
}

}  // namespace

AdamW::AdamW(const std::vector<Tensor>& params, AdamWConfig config) : config_(config) {
  set_lr(config.lr);
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
    throw ValidationError("adamw: betas must lie in [0, 1)");
  }
  for (const auto& p : params) {
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
  }
}

void AdamW::set_lr(double lr) {
  if (!(lr > 0.0)) throw ValidationError("adamw: learning rate must be positive");
  config_.lr = lr;
}

void AdamW::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  check_shapes(m_, params, "adamw");
  check_shapes(m_, grads, "adamw");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (double g : grads[i].data()) {
      if (!std::isfinite(g)) {
        throw NumericalError("adamw: non-finite gradient in tensor " + std::to_string(i));
      }
    }
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * p[j]);
    }
  }
}

Ema::Ema(const std::vector<Tensor>& params, double decay) : decay_(decay), shadow_(params) {
  if (decay < 0.0 || decay > 1.0) throw ValidationError("ema: decay must lie in [0, 1]");
}

void Ema::update(const std::vector<Tensor>& params) {
  check_shapes(shadow_, params, "ema");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto s = shadow_[i].data();
    auto p = params[i].data();
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = decay_ * s[j] + (1.0 - decay_) * p[j];
  }
}

}  // namespace dsb
