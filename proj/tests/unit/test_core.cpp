#include <doctest.h>

#include <cmath>
#include <vector>

#include "dsb/core/autodiff.hpp"
#include "dsb/core/error.hpp"
#include "dsb/core/logmath.hpp"
#include "dsb/core/optim.hpp"
#include "dsb/core/parallel.hpp"
#include "dsb/core/rng.hpp"
#include "fd_check.hpp"
#include "frozen_values.hpp"

using namespace dsb;

namespace {

Tensor random_tensor(Shape shape, RngStream& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

}  // namespace

TEST_CASE("logsumexp matches the high-precision value") {
  const std::vector<double> v{0.0, -1.0, -2.0};
  CHECK(logsumexp(v) == doctest::Approx(frozen::lse_0_m1_m2).epsilon(1e-15));
}

TEST_CASE("logsumexp of all -inf is -inf and empty input is rejected") {
  const std::vector<double> v{kNegInf, kNegInf};
  CHECK(logsumexp(v) == kNegInf);
  CHECK_THROWS_AS(logsumexp(std::vector<double>{}), ValidationError);
  CHECK_THROWS_AS(softmax(v), DegenerateError);
}

TEST_CASE("logsumexp is stable for large magnitudes") {
  const std::vector<double> v{1000.0, 1000.0};
  CHECK(logsumexp(v) == doctest::Approx(1000.0 + std::log(2.0)));
  const std::vector<double> w{-1e5, -1e5 - 1.0};
  CHECK(logsumexp(w) == doctest::Approx(-1e5 + std::log1p(std::exp(-1.0))));
}

TEST_CASE("log_matmul agrees with the linear product and survives underflow") {
  RngStream rng(1, 1);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 5}, rng);
  const Tensor l = log_matmul(a, b, false);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (std::size_t s = 0; s < 4; ++s) acc += std::exp(a(i, s) + b(s, j));
      CHECK(l(i, j) == doctest::Approx(std::log(acc)).epsilon(1e-13));
    }
  }
  // Entries around -2000 underflow in linear doubles but not in logs.
  Tensor deep(Shape{1, 2}, std::vector<double>{-2000.0, -2001.0});
  Tensor id(Shape{2, 1}, std::vector<double>{0.0, 0.0});
  CHECK(log_matmul(deep, id, false)(0, 0) == doctest::Approx(-2000.0 + std::log1p(std::exp(-1.0))));
}

TEST_CASE("rng streams are reproducible and decorrelated") {
  RngStream a(42, 7), b(42, 7), c(42, 8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  RngStream s1 = RngStream(3, 1).split(5), s2 = RngStream(3, 1).split(5);
  CHECK(s1.uniform() == s2.uniform());
}

TEST_CASE("categorical_log never draws -inf entries") {
  RngStream rng(9, 9);
  const std::vector<double> lw{kNegInf, 0.0, kNegInf, std::log(3.0)};
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 4000; ++i) ++counts[rng.categorical_log(lw)];
  CHECK(counts[0] == 0);
  CHECK(counts[2] == 0);
  CHECK(counts[3] > 2 * counts[1]);
}

TEST_CASE("parallel_for results do not depend on the job count") {
  std::vector<double> one(1000), many(1000);
  parallel_for(1000, 1, [&](std::size_t i) { one[i] = RngStream(5, 1).split(i).uniform(); });
  parallel_for(1000, 4, [&](std::size_t i) { many[i] = RngStream(5, 1).split(i).uniform(); });
  CHECK(one == many);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 7) throw ValidationError("boom");
                  }),
                  ValidationError);
}

TEST_CASE("autodiff primitives agree with central differences") {
  RngStream rng(11, 3);
  using VarList = std::vector<ad::Var>;
  std::vector<std::pair<const char*, std::function<ad::Var(ad::Tape&, const VarList&)>>> cases;
  cases.push_back({"matmul-relu-logsoftmax", [](ad::Tape&, const VarList& v) {
                     auto h = ad::relu(ad::add(ad::matmul(v[0], v[1]), v[2]));
                     return ad::sum(ad::mul(ad::log_softmax(h), ad::exp(ad::scale(h, 0.1))));
                   }});
  cases.push_back({"logsumexp-axes", [](ad::Tape&, const VarList& v) {
                     auto a = ad::logsumexp(v[0], 0);
                     auto b = ad::logsumexp(v[0], 1);
                     return ad::add(ad::sum(ad::mul(a, a)), ad::sum(ad::exp(ad::scale(b, 0.3))));
                   }});
  cases.push_back({"gathers-pick", [](ad::Tape&, const VarList& v) {
                     auto g = ad::gather_rows(v[0], {2, 0, 2, 1});
                     auto c = ad::gather_cols(v[1], {1, 1, 0, 2});
                     auto p = ad::pick(ad::matmul(g, v[1]), {0, 3, 2, 1});
                     return ad::add(ad::sum(ad::mul(p, p)), ad::sum(ad::mul(c, c)));
                   }});
  cases.push_back({"log-matmul", [](ad::Tape&, const VarList& v) {
                     auto l = ad::log_matmul(v[0], v[1], false);
                     auto t = ad::log_matmul(v[0], ad::reshape(v[3], Shape{4, 4}), true);
                     return ad::add(ad::sum(ad::exp(ad::scale(l, 0.5))), ad::mean(t));
                   }});
  cases.push_back({"sub-log-sum", [](ad::Tape&, const VarList& v) {
                     auto e = ad::exp(v[0]);
                     auto s = ad::sum(e, 1);
                     return ad::sum(ad::sub(ad::log(s), ad::sum(v[0], 1)));
                   }});
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    std::vector<Tensor> params{random_tensor({3, 4}, rng), random_tensor({4, 4}, rng),
                               random_tensor({4}, rng), random_tensor({16}, rng)};
    const auto res = testing::fd_check(params, fn, 60, 17);
    CHECK(res.worst < 1e-6);
  }
}

TEST_CASE("log_matvec_rows gradient and -inf entries") {
  RngStream rng(4, 4);
  Tensor logs(Shape{3 * 4, 4});
  for (double& v : logs.data()) v = rng.normal();
  logs(5, 2) = kNegInf;
  const auto stack = ad::MatrixStack::from_log(logs, 3);
  std::vector<Tensor> params{random_tensor({5, 4}, rng)};
  auto fn = [&](ad::Tape&, const std::vector<ad::Var>& v) {
    auto out = ad::log_matvec_rows(stack, v[0], {0, 2, 1, 1, 0});
    return ad::sum(ad::exp(ad::scale(out, 0.7)));
  };
  CHECK(testing::fd_check(params, fn, 60, 5).worst < 1e-6);

  ad::Tape tape;
  Tensor z(Shape{1, 4}, std::vector<double>{kNegInf, 0.0, kNegInf, kNegInf});
  const auto out = ad::log_matvec_rows(stack, tape.constant(z), {1});
  // Row r of the output picks M_1[r, 1].
  for (std::size_t r = 0; r < 4; ++r) CHECK(out.value()(0, r) == doctest::Approx(logs(4 + r, 1)));
}

TEST_CASE("masked products: 0 * -inf contributes nothing") {
  ad::Tape tape;
  const auto w = tape.parameter(Tensor::vector({0.0, 1.0}));
  const auto l = tape.constant(Tensor::vector({kNegInf, -2.0}));
  const auto loss = ad::sum(ad::mul(w, l));
  CHECK(loss.value().item() == doctest::Approx(-2.0));
  tape.backward(loss);
  CHECK(tape.grad(w)[1] == doctest::Approx(-2.0));
}

TEST_CASE("tape rejects NaN values at the producing op") {
  ad::Tape tape;
  const auto a = tape.parameter(Tensor::vector({-1.0}));
  CHECK_THROWS_AS(ad::log(a), NumericalError);
}

TEST_CASE("constants and unused parameters get exactly zero gradient") {
  ad::Tape tape;
  const auto p = tape.parameter(Tensor::vector({1.0, 2.0}));
  const auto unused = tape.parameter(Tensor::vector({3.0}));
  const auto c = tape.constant(Tensor::vector({4.0, 5.0}));
  const auto loss = ad::sum(ad::mul(p, c));
  tape.backward(loss);
  CHECK(tape.grad(unused)[0] == 0.0);
  CHECK(tape.grad(c)[0] == 0.0);
  CHECK(tape.grad(p)[1] == 5.0);
}

TEST_CASE("AdamW first step matches the high-precision value") {
  std::vector<Tensor> params{Tensor::vector({1.0})};
  AdamW opt(params, AdamWConfig{.lr = 0.1});
  opt.step(params, {Tensor::vector({0.3})});
  CHECK(params[0][0] - 1.0 == doctest::Approx(frozen::adamw_first_step).epsilon(1e-12));
  CHECK(opt.steps() == 1);
}

TEST_CASE("AdamW refuses non-finite gradients without touching parameters") {
  std::vector<Tensor> params{Tensor::vector({1.0, 2.0})};
  AdamW opt(params, AdamWConfig{});
  CHECK_THROWS_AS(opt.step(params, {Tensor::vector({0.1, std::nan("")})}), NumericalError);
  CHECK(params[0][0] == 1.0);
  CHECK(opt.steps() == 0);
  CHECK_THROWS_AS(AdamW(params, AdamWConfig{.lr = 0.0}), ValidationError);
}

TEST_CASE("AdamW minimizes a quadratic") {
  std::vector<Tensor> params{Tensor::vector({3.0, -2.0})};
  AdamW opt(params, AdamWConfig{.lr = 0.05});
  for (int i = 0; i < 2000; ++i) {
    Tensor g = params[0];
    opt.step(params, {g});
  }
  CHECK(std::abs(params[0][0]) < 1e-2);
  CHECK(std::abs(params[0][1]) < 1e-2);
}

TEST_CASE("EMA tracks every tensor") {
  std::vector<Tensor> params{Tensor::vector({0.0}), Tensor::vector({10.0, 10.0})};
  Ema ema(params, 0.5);
  params[0][0] = 2.0;
  params[1].fill(0.0);
  ema.update(params);
  CHECK(ema.shadow()[0][0] == 1.0);
  CHECK(ema.shadow()[1][1] == 5.0);
}

TEST_CASE("logsumexp trivial cases") {
  CHECK(logsumexp(std::vector<double>{-3.5}) == -3.5);
  CHECK(logsumexp(std::vector<double>{2.0, 2.0}) == doctest::Approx(2.0 + std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("closed-form gradients: sum and logsumexp") {
  ad::Tape tape;
  const auto a = tape.parameter(Tensor::vector({0.3, -1.0, 2.0}));
  tape.backward(ad::sum(a));
  const Tensor g = tape.grad(a);
  for (double v : g.data()) CHECK(v == 1.0);

  ad::Tape t2;
  const std::vector<double> x{0.3, -1.0, 2.0};
  const auto b = t2.parameter(Tensor::vector(x));
  t2.backward(ad::logsumexp(b, 0));
  const auto p = softmax(x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(t2.grad(b)[i] == doctest::Approx(p[i]).epsilon(1e-15));
}

TEST_CASE("AdamW with zero gradient and zero decay leaves parameters unchanged") {
  std::vector<Tensor> params{Tensor::vector({1.5, -2.0})};
  AdamW opt(params, AdamWConfig{});
  opt.step(params, {Tensor::vector({0.0, 0.0})});
  CHECK(params[0][0] == 1.5);
  CHECK(params[0][1] == -2.0);
}

TEST_CASE("AdamW 100 steps on a quadratic lower the loss") {
  std::vector<Tensor> params{Tensor::vector({2.0})};
  AdamW opt(params, AdamWConfig{.lr = 0.01});
  const double start = params[0][0] * params[0][0];
  for (int i = 0; i < 100; ++i) opt.step(params, {Tensor::vector({2.0 * params[0][0]})});
  CHECK(params[0][0] * params[0][0] < start);
}

TEST_CASE("EMA decay limits and the two-step recurrence") {
  std::vector<Tensor> s{Tensor::vector({4.0})};
  std::vector<Tensor> p{Tensor::vector({8.0})};
  Ema zero(s, 0.0), one(s, 1.0), half(s, 0.5);
  zero.update(p);
  one.update(p);
  half.update(p);
  half.update(p);
  CHECK(zero.shadow()[0][0] == 8.0);
  CHECK(one.shadow()[0][0] == 4.0);
  CHECK(half.shadow()[0][0] == doctest::Approx(0.25 * 4.0 + 0.75 * 8.0));
}
