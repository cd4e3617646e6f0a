#include <random>

#include "doctest.h"
#include "funsor/funsor.hpp"

using namespace funsor;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::ParseError;
}

}  // namespace

TEST_CASE("free variables") {
  CHECK(free_vars(variable("z", Domain::reals({3}))) == TypeContext{{"z", Domain::reals({3})}});
  const Term pc = tensor(TensorAtom(TypeContext{{"c", Domain::bint(2)}}, Domain::real(), {0.5, 0.5}));
  CHECK(free_vars(reduce(ReduceOp::LogSumExp, "c", pc)).empty());
  CHECK(is_ground(reduce(ReduceOp::LogSumExp, "c", pc)));
  // Subst removes the bound name and adds the value's variables
  const Term s = subst(add(variable("x", Domain::real()), variable("y", Domain::real())),
                       {{"x", variable("w", Domain::real())}});
  CHECK(free_vars(s).set_equal(TypeContext{{"y", Domain::real()}, {"w", Domain::real()}}));
}

TEST_CASE("typing of take and variables") {
  const auto j = infer_type(apply(LiftedOp::Take, {variable("z", Domain::reals({2, 3})), variable("c", Domain::bint(2))}));
  CHECK(j.context == (TypeContext{{"z", Domain::reals({2, 3})}, {"c", Domain::bint(2)}}));
  CHECK(j.output == Domain::reals({3}));
  const auto v = infer_type(variable("v", Domain::bint(5)));
  CHECK(v.context == TypeContext{{"v", Domain::bint(5)}});
  CHECK(v.output == Domain::bint(5));
}

TEST_CASE("typing errors") {
  CHECK(code_of([] { infer_type(add(variable("v", Domain::bint(5)), number(1.0))); }) == ErrorCode::TypeError);
  CHECK(code_of([] { infer_type(add(variable("v", Domain::real()), variable("v", Domain::bint(2)))); }) ==
        ErrorCode::TypeError);
  // reduce body must be real-valued
  CHECK(code_of([] { infer_type(reduce(ReduceOp::LogSumExp, "v", variable("v", Domain::bint(3)))); }) ==
        ErrorCode::TypeError);
  // substituted value must match the variable's type
  CHECK(code_of([] {
          infer_type(subst(variable("x", Domain::real()), {{"x", variable("u", Domain::reals({2}))}}));
        }) == ErrorCode::TypeError);
  // failures are cached, not recomputed differently
  const Term bad = add(variable("v", Domain::bint(5)), number(1.0));
  CHECK_THROWS_AS(bad->type(), Error);
  CHECK_THROWS_AS(bad->type(), Error);
}

TEST_CASE("substitution") {
  CHECK(scalar_value(interpret(exact(), substitute(variable("v", Domain::real()), "v", number(2.0)))) == 2.0);
  const Term v = variable("v", Domain::real());
  CHECK(structurally_equal(substitute(v, "u", number(1.0)), v));

  // capture avoidance: (sum_w x + w)[x := w]
  const Term body = add(variable("x", Domain::real()),
                        tensor(TensorAtom(TypeContext{{"w", Domain::bint(2)}}, Domain::real(), {0.0, 1.0})));
  const Term r = reduce(ReduceOp::LogSumExp, "w", body);
  const Term out = substitute(r, "x", variable("w", Domain::real()));
  CHECK(free_vars(out) == TypeContext{{"w", Domain::real()}});
  const auto* red = out->as<ReduceNode>();
  REQUIRE(red != nullptr);
  CHECK(red->var != "w");
}

TEST_CASE("substitution typing rule and composition") {
  std::mt19937_64 rng(3);
  const Term t = add(add(variable("x", Domain::real()), variable("y", Domain::real())),
                     tensor(TensorAtom(TypeContext{{"a", Domain::bint(3)}}, Domain::real(), {1, 2, 3})));
  const Term e = add(variable("u", Domain::real()), variable("y", Domain::real()));
  const auto ctx = infer_type(substitute(t, "x", e)).context;
  CHECK(ctx.set_equal(context_union(context_remove(free_vars(t), "x"), free_vars(e))));

  // t[x:=a][u:=b] == t[x:=a[u:=b], u:=b]
  const Term a = add(variable("u", Domain::real()), number(1.0));
  const Term b = number(0.25);
  const Term lhs = substitute(substitute(t, "x", a), "u", b);
  const Term rhs = substitute(t, {{"x", substitute(a, "u", b)}, {"u", b}});
  const Term ground_y = number(-2.0);
  const double l = scalar_value(interpret(exact(), reduce(ReduceOp::LogSumExp, "a", substitute(lhs, "y", ground_y))));
  const double r = scalar_value(interpret(exact(), reduce(ReduceOp::LogSumExp, "a", substitute(rhs, "y", ground_y))));
  CHECK(l == doctest::Approx(r).epsilon(1e-15));
}

TEST_CASE("alpha renaming") {
  const Term r = reduce(ReduceOp::LogSumExp, "v", variable("v", Domain::real()));
  const Term a = alpha_rename(r, "v");
  const Term b = alpha_rename(r, "v");
  const auto* ra = a->as<ReduceNode>();
  const auto* rb = b->as<ReduceNode>();
  REQUIRE(ra);
  REQUIRE(rb);
  CHECK(ra->var.rfind("v#", 0) == 0);
  CHECK(ra->var != rb->var);
  CHECK(ra->body->as<VariableNode>()->name == ra->var);
  CHECK(infer_type(a).context == infer_type(r).context);
  CHECK(infer_type(a).output == infer_type(r).output);
}

TEST_CASE("user names may not use the reserved marker") {
  CHECK(code_of([] { validate_user_name("x#1"); }) == ErrorCode::InvalidName);
  const Name f = fresh_name("x");
  CHECK(f.rfind("x#", 0) == 0);
  CHECK(fresh_name("x") != f);
  CHECK(code_of([&] { validate_user_name(f); }) == ErrorCode::InvalidName);
}

TEST_CASE("step matching conditions") {
  const TypeContext ctx{{"t", Domain::bint(4)}, {"a", Domain::bint(2)}, {"b", Domain::bint(2)}, {"c", Domain::bint(2)},
                        {"x", Domain::real()}};
  CHECK_NOTHROW(validate_step(ctx, "t", StepMatching{{{"a", "b"}}}));
  CHECK(code_of([&] { validate_step(ctx, "t", StepMatching{{{"t", "a"}}}); }) == ErrorCode::InvalidMatching);
  CHECK(code_of([&] { validate_step(ctx, "t", StepMatching{{{"a", "b"}, {"b", "c"}}}); }) == ErrorCode::InvalidMatching);
  CHECK(code_of([&] { validate_step(ctx, "t", StepMatching{{{"a", "x"}}}); }) == ErrorCode::InvalidMatching);
  CHECK(code_of([&] { validate_step(ctx, "t", StepMatching{{{"a", "zz"}}}); }) == ErrorCode::InvalidMatching);
}

TEST_CASE("pretty printer is deterministic") {
  const Term t = reduce(ReduceOp::LogSumExp, "c",
                        add(tensor(TensorAtom(TypeContext{{"c", Domain::bint(2)}}, Domain::real(), {0.5, 0.5})),
                            variable("x", Domain::real())));
  CHECK(to_string(t) == to_string(t));
  CHECK(to_string(t) == "Σ_c (Tensor((c:ℤ2), ℝ) + x)");
}

TEST_CASE("structural equality compares data by value") {
  const Term a = tensor(TensorAtom(TypeContext{{"c", Domain::bint(2)}}, Domain::real(), {0.5, 0.5}));
  const Term b = tensor(TensorAtom(TypeContext{{"c", Domain::bint(2)}}, Domain::real(), {0.5, 0.5}));
  const Term c = tensor(TensorAtom(TypeContext{{"c", Domain::bint(2)}}, Domain::real(), {0.5, 0.25}));
  CHECK(structurally_equal(a, b));
  CHECK_FALSE(structurally_equal(a, c));
}
