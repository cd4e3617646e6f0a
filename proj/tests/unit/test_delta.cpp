#include <cmath>
#include <random>

#include "doctest.h"
#include "funsor/funsor.hpp"
#include "ground_eval.hpp"

using namespace funsor;

namespace {

DeltaAtom point_mass(const Name& v, double x) { return DeltaAtom(v, TensorAtom::scalar(x)); }

}  // namespace

TEST_CASE("construction") {
  CHECK(point_mass("v", 1.5).domain() == Domain::real());
  CHECK_THROWS_AS(DeltaAtom("a", TensorAtom(TypeContext{{"a", Domain::bint(2)}}, Domain::real(), {0, 1})), Error);
  const DeltaAtom d("v", TensorAtom(TypeContext{{"a", Domain::bint(2)}}, Domain::real(), {0, 1}));
  CHECK(d.inputs() == (TypeContext{{"a", Domain::bint(2)}, {"v", Domain::real()}}));
}

TEST_CASE("product trigger substitutes the point") {
  Evaluator ev(exact());
  const Term v = variable("v", Domain::real());
  const auto out = delta_product_trigger(point_mass("v", 2.0), apply(LiftedOp::Mul, {v, v}), ev);
  REQUIRE(out.has_value());
  const auto nf = normalize(*out);
  REQUIRE(nf.deltas.size() == 1);
  CHECK(nf.tensor->item() == 4.0);

  CHECK_FALSE(delta_product_trigger(point_mass("v", 2.0), number(3.0), ev).has_value());

  const GaussianAtom g({{"v", Domain::real()}, {"u", Domain::real()}},
                       TensorAtom(TypeContext{}, Domain::reals({2}), {0.5, -0.3}),
                       TensorAtom(TypeContext{}, Domain::reals({2, 2}), {2.0, 0.4, 0.4, 1.0}));
  const auto with_g = delta_product_trigger(point_mass("v", 0.8), gaussian(g), ev);
  REQUIRE(with_g.has_value());
  const auto gnf = normalize(*with_g);
  REQUIRE(gnf.gaussian.has_value());
  CHECK_FALSE(gnf.gaussian->has_real("v"));
  const double got = gnf.tensor->item() + gaussian_eval(*gnf.gaussian, {{"u", {-1.2}}});
  CHECK(std::abs(got - gaussian_eval(g, {{"v", {0.8}}, {"u", {-1.2}}})) < 1e-12);
}

TEST_CASE("sum elimination") {
  CHECK(scalar_value(*delta_sum_eliminate(point_mass("v", 1.5), std::nullopt)) == 0.0);
  CHECK(scalar_value(*delta_sum_eliminate(point_mass("v", 1.5), number(7.0))) == 7.0);
  CHECK_FALSE(delta_sum_eliminate(point_mass("v", 1.5), variable("v", Domain::real())).has_value());

  // through the Exact interpretation: trigger first, then eliminate
  const Term v = variable("v", Domain::real());
  const Term f = apply(LiftedOp::Exp, {apply(LiftedOp::Sub, {v, number(0.25)})});
  const Term t = reduce(ReduceOp::LogSumExp, "v", add(delta(point_mass("v", 1.0)), f));
  CHECK(scalar_value(interpret(exact(), t)) == doctest::Approx(std::exp(0.75)).epsilon(1e-15));
  CHECK(scalar_value(interpret(exact(), reduce(ReduceOp::LogSumExp, "v", delta(point_mass("v", 3.0))))) == 0.0);
}

TEST_CASE("expectation identity for every lifted op") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  const Term v = variable("v", Domain::real());
  for (int k = 0; k < 20; ++k) {
    const double e = u(rng);
    const double c = u(rng);
    const std::vector<std::pair<Term, double>> cases{
        {apply(LiftedOp::Add, {v, number(c)}), e + c},
        {apply(LiftedOp::Sub, {v, number(c)}), e - c},
        {apply(LiftedOp::Mul, {v, number(c)}), e * c},
        {apply(LiftedOp::Neg, {v}), -e},
        {apply(LiftedOp::Exp, {v}), std::exp(e)},
        {apply(LiftedOp::Log, {v}), std::log(e)},
        {apply(LiftedOp::LogAddExp, {v, number(c)}), std::log(std::exp(e) + std::exp(c))},
        {apply(LiftedOp::Max, {v, number(c)}), std::max(e, c)},
        {apply(LiftedOp::Min, {v, number(c)}), std::min(e, c)},
    };
    for (const auto& [f, want] : cases) {
      const Term t = reduce(ReduceOp::LogSumExp, "v", add(delta(point_mass("v", e)), f));
      // logaddexp uses the max-shift form, so allow a last-place difference
      CHECK(scalar_value(interpret(exact(), t)) == doctest::Approx(want).epsilon(1e-15));
    }
  }
}

TEST_CASE("bounded deltas index tensors") {
  const DeltaAtom d("b", TensorAtom(TypeContext{{"a", Domain::bint(2)}}, Domain::bint(3), {2, 0}));
  const TensorAtom w(TypeContext{{"b", Domain::bint(3)}}, Domain::real(), {0.1, 0.2, 0.3});
  const auto out = normalize(interpret(exact(), reduce(ReduceOp::LogSumExp, "b", add(delta(d), tensor(w)))));
  REQUIRE(out.tensor.has_value());
  CHECK(out.tensor->values() == std::vector<double>{0.3, 0.1});
  const auto ind = delta_indicator(d, TensorAtom::index_value(2, 3));
  CHECK(ind.values()[0] == 0.0);
  CHECK(std::isinf(ind.values()[1]));
}

TEST_CASE("k deltas cost O(k) buffers") {
  std::vector<Term> parts;
  for (int k = 0; k < 8; ++k) parts.push_back(delta(point_mass("v" + std::to_string(k), k)));
  stats().reset();
  const auto nf = normalize(interpret(exact(), sum_of(parts)));
  CHECK(nf.deltas.size() == 8);
  CHECK(stats().buffers_allocated.load() <= 8);
  CHECK(stats().elements_allocated.load() <= 8);
}
