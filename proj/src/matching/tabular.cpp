#include <cmath>

#include "dsb/core/error.hpp"
#include "dsb/matching/matching.hpp"
#include "dsb/oracle/oracle.hpp"

namespace dsb {

namespace {

// Product kernel over S^D for the m-step power of the local chain.
RowMatrix joint_power(const ReferenceProcess& proc, std::size_t D, std::size_t m) {
  const std::size_t S = proc.states();
  const std::size_t X = oracle::state_count(S, D);
  const Tensor& lp = proc.log_power(m);
  RowMatrix out(X, X);
  for (std::size_t a = 0; a < X; ++a) {
    const auto xa = oracle::decode_state(a, S, D);
    for (std::size_t b = 0; b < X; ++b) {
      const auto xb = oracle::decode_state(b, S, D);
      double l = 0.0;
      for (std::size_t d = 0; d < D; ++d) l += lp(xa[d], xb[d]);
      out(a, b) = std::exp(l);
    }
  }
  return out;
}

Tensor to_tensor(const RowMatrix& m) {
  Tensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.matrix() = m;
  return t;
}

}  // namespace

Tensor transpose(const Tensor& t) {
  Tensor out(Shape{t.cols(), t.rows()});
  out.matrix() = t.matrix().transpose();
  return out;
}

TabularChain exact_markov_projection(const Tensor& coupling, const ReferenceProcess& local, std::size_t D) {
  const std::size_t steps = local.steps();
  const std::size_t X = oracle::state_count(local.states(), D);
  if (coupling.shape() != Shape{X, X}) throw ValidationError("markov projection: coupling shape mismatch");
  std::vector<RowMatrix> powers;
  for (std::size_t m = 0; m <= steps; ++m) powers.push_back(joint_power(local, D, m));

  // A = coupling / Qbar_{steps}, zero wherever the coupling is.
  RowMatrix A = RowMatrix::Zero(X, X);
  const auto pi = coupling.matrix();
  for (std::size_t a = 0; a < X; ++a) {
    for (std::size_t e = 0; e < X; ++e) {
      if (pi(a, e) <= 0.0) continue;
      if (powers[steps](a, e) <= 0.0) throw DegenerateError("markov projection: coupling outside kernel support");
      A(a, e) = pi(a, e) / powers[steps](a, e);
    }
  }
  TabularChain chain;
  for (std::size_t j = 1; j <= steps; ++j) {
    // G(y, e) = joint of (y_{j-1} = y, end = e) divided by Qbar_{steps-j+1}(y, e).
    const RowMatrix G = powers[j - 1].transpose() * A;
    const Eigen::VectorXd mass = (G.array() * powers[steps - j + 1].array()).rowwise().sum();
    RowMatrix m = (G * powers[steps - j].transpose()).array() * powers[1].array();
    for (std::size_t y = 0; y < X; ++y) {
      if (mass(y) > 0.0) {
        m.row(y) /= mass(y);
      } else {
        m.row(y) = powers[1].row(y);  // unreachable state: keep the reference step
      }
    }
    chain.transitions.push_back(to_tensor(m));
  }
  return chain;
}

Tensor chain_coupling(const TabularChain& chain, std::span<const double> start_law) {
  if (chain.transitions.empty()) throw ValidationError("chain_coupling: empty chain");
  const std::size_t X = chain.transitions.front().rows();
  if (start_law.size() != X) throw ValidationError("chain_coupling: start law size mismatch");
  RowMatrix acc = RowMatrix::Zero(X, X);
  for (std::size_t i = 0; i < X; ++i) acc(i, i) = start_law[i];
  for (const auto& t : chain.transitions) acc = acc * t.matrix();
  return to_tensor(acc);
}

Tensor dimf_step(const Tensor& coupling, const ReferenceProcess& proc, std::size_t D) {
  const TabularChain chain = exact_markov_projection(coupling, proc, D);
  const Eigen::VectorXd p0 = coupling.matrix().rowwise().sum();
  return chain_coupling(chain, std::span<const double>(p0.data(), static_cast<std::size_t>(p0.size())));
}

Tensor alpha_imf_step(const Tensor& coupling, double alpha, const ReferenceProcess& proc, std::size_t D) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
  Tensor next = dimf_step(coupling, proc, D);
  next.matrix() = (1.0 - alpha) * coupling.matrix() + alpha * next.matrix();
  return next;
}

TabularChain alpha_csbm_tabular_update(const TabularChain& backward, const Tensor& cached,
                                       std::span<const double> p1, double alpha,
                                       const ReferenceProcess& proc, std::size_t D) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
  Tensor target = transpose(chain_coupling(backward, p1));
  if (target.shape() != cached.shape()) throw ValidationError("alpha-csbm update: coupling shape mismatch");
  target.matrix() = (1.0 - alpha) * cached.matrix() + alpha * target.matrix();
  return exact_markov_projection(target, proc, D);
}

}  // namespace dsb
