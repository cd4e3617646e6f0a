#include "funsor/terms.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace funsor {

std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::Tensor: return "Tensor";
    case Kind::Gaussian: return "Gaussian";
    case Kind::Delta: return "Delta";
    case Kind::Variable: return "Variable";
    case Kind::Apply: return "Apply";
    case Kind::Subst: return "Subst";
    case Kind::Reduce: return "Reduce";
    case Kind::Markov: return "MarkovProduct";
    case Kind::Slice: return "Slice";
    case Kind::Cat: return "Cat";
  }
  return "?";
}

namespace {

Term make(TermNode::Variant v) { return std::make_shared<const TermNode>(std::move(v)); }

void add_tolerant(TypeContext& ctx, const TypeContext& other) {
  for (const auto& e : other) {
    if (!ctx.contains(e.name)) ctx.add(e.name, e.domain);
  }
}

bool binds(const std::vector<Binding>& bs, const Name& n) {
  return std::any_of(bs.begin(), bs.end(), [&](const Binding& b) { return b.name == n; });
}

TypeContext compute_free_vars(const TermNode& t) {
  return std::visit(
      [&](const auto& n) -> TypeContext {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, TensorLeaf>) {
          return n.atom.inputs();
        } else if constexpr (std::is_same_v<N, GaussianLeaf>) {
          return n.atom.inputs();
        } else if constexpr (std::is_same_v<N, DeltaLeaf>) {
          return n.atom.inputs();
        } else if constexpr (std::is_same_v<N, VariableNode>) {
          return TypeContext{{n.name, n.domain}};
        } else if constexpr (std::is_same_v<N, ApplyNode>) {
          TypeContext out;
          for (const auto& a : n.args) add_tolerant(out, a->free_vars());
          return out;
        } else if constexpr (std::is_same_v<N, SubstNode>) {
          TypeContext out;
          const auto& base = n.base->free_vars();
          for (const auto& e : base) {
            if (!binds(n.bindings, e.name)) out.add(e.name, e.domain);
          }
          for (const auto& b : n.bindings) {
            if (base.contains(b.name)) add_tolerant(out, b.value->free_vars());
          }
          return out;
        } else if constexpr (std::is_same_v<N, ReduceNode>) {
          TypeContext out;
          for (const auto& e : n.body->free_vars()) {
            if (e.name != n.var) out.add(e.name, e.domain);
          }
          return out;
        } else if constexpr (std::is_same_v<N, MarkovNode>) {
          TypeContext out;
          for (const auto& e : n.body->free_vars()) {
            if (e.name != n.time) out.add(e.name, e.domain);
          }
          return out;
        } else if constexpr (std::is_same_v<N, SliceNode>) {
          const auto len = n.stride >= 1 ? slice_length(n.start, n.stop, n.stride) : 0;
          if (len < 1) return TypeContext{};
          return TypeContext{{n.over, Domain::bint(len)}};
        } else {
          std::int64_t total = 0;
          TypeContext rest;
          for (const auto& p : n.parts) {
            for (const auto& e : p->free_vars()) {
              if (e.name == n.over) {
                if (e.domain.is_bounded()) total += e.domain.size();
              } else if (!rest.contains(e.name)) {
                rest.add(e.name, e.domain);
              }
            }
          }
          TypeContext out;
          if (total > 0) out.add(n.over, Domain::bint(total));
          add_tolerant(out, rest);
          return out;
        }
      },
      t.node());
}

[[noreturn]] void type_error(const TermNode& t, const std::string& why) {
  fail(ErrorCode::TypeError, why + " in " + std::string(kind_name(t.kind())) + " term");
}

TypeContext union_or_type_error(const TermNode& t, const TypeContext& a, const TypeContext& b) {
  try {
    return context_union(a, b);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TypeConflict) throw;
    type_error(t, e.detail());
  }
}

Domain apply_output(const TermNode& t, LiftedOp op, const std::vector<Domain>& outs) {
  const std::string name(op_name(op));
  if (static_cast<int>(outs.size()) != arity(op)) {
    type_error(t, name + " expects " + std::to_string(arity(op)) + " arguments, got " + std::to_string(outs.size()));
  }
  if (op == LiftedOp::Take) {
    const auto& a = outs[0];
    const auto& b = outs[1];
    if (!a.is_real() || a.shape().empty()) type_error(t, "take needs a real array, got " + a.to_string());
    if (!b.is_bounded() || b.size() != a.shape()[0]) {
      type_error(t, "take index must be ℤ" + std::to_string(a.shape()[0]) + ", got " + b.to_string());
    }
    return Domain::reals(std::vector<std::int64_t>(a.shape().begin() + 1, a.shape().end()));
  }
  for (const auto& d : outs) {
    if (!d.is_real()) type_error(t, name + " needs real operands, got " + d.to_string());
  }
  if (outs.size() == 1) return outs[0];
  const auto& as = outs[0].shape();
  const auto& bs = outs[1].shape();
  if (as != bs && !as.empty() && !bs.empty()) {
    type_error(t, name + " operand shapes differ: " + outs[0].to_string() + " vs " + outs[1].to_string());
  }
  return as.empty() ? outs[1] : outs[0];
}

Judgement compute_type(const TermNode& t) {
  return std::visit(
      [&](const auto& n) -> Judgement {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, TensorLeaf>) {
          return {n.atom.inputs(), n.atom.output()};
        } else if constexpr (std::is_same_v<N, GaussianLeaf>) {
          return {n.atom.inputs(), Domain::real()};
        } else if constexpr (std::is_same_v<N, DeltaLeaf>) {
          return {n.atom.inputs(), Domain::real()};
        } else if constexpr (std::is_same_v<N, VariableNode>) {
          return {TypeContext{{n.name, n.domain}}, n.domain};
        } else if constexpr (std::is_same_v<N, ApplyNode>) {
          TypeContext ctx;
          std::vector<Domain> outs;
          for (const auto& a : n.args) {
            const auto& j = a->type();
            ctx = union_or_type_error(t, ctx, j.context);
            outs.push_back(j.output);
          }
          return {ctx, apply_output(t, n.op, outs)};
        } else if constexpr (std::is_same_v<N, SubstNode>) {
          const auto& base = n.base->type();
          std::set<Name> seen;
          for (const auto& b : n.bindings) {
            if (!seen.insert(b.name).second) type_error(t, "name " + b.name + " bound twice");
          }
          TypeContext ctx;
          for (const auto& e : base.context) {
            if (!binds(n.bindings, e.name)) ctx.add(e.name, e.domain);
          }
          for (const auto& b : n.bindings) {
            const auto& vj = b.value->type();
            const auto* d = base.context.find(b.name);
            if (!d) continue;
            if (*d != vj.output) {
              type_error(t, "substituted value for " + b.name + " has type " + vj.output.to_string() + ", expected " +
                                d->to_string());
            }
            ctx = union_or_type_error(t, ctx, vj.context);
          }
          return {ctx, base.output};
        } else if constexpr (std::is_same_v<N, ReduceNode>) {
          const auto& body = n.body->type();
          const auto* d = body.context.find(n.var);
          if (!d) type_error(t, "reduction variable " + n.var + " is not free in the body");
          if (!body.output.is_real()) type_error(t, "reduction body must be real-valued, got " + body.output.to_string());
          if (d->is_real()) {
            if (n.op != ReduceOp::LogSumExp) {
              type_error(t, std::string(reduce_name(n.op)) + " reduction over real variable " + n.var);
            }
            if (!body.output.is_real_scalar()) type_error(t, "integrand must be a real scalar");
          }
          return {context_remove(body.context, n.var), body.output};
        } else if constexpr (std::is_same_v<N, MarkovNode>) {
          const auto& body = n.body->type();
          const auto* d = body.context.find(n.time);
          if (!d) type_error(t, "time variable " + n.time + " is not free in the body");
          if (!d->is_bounded()) type_error(t, "time variable " + n.time + " must be bounded");
          if (!body.output.is_real_scalar()) type_error(t, "Markov product body must be a real scalar");
          if (n.sum_op == ReduceOp::Add) type_error(t, "Markov product sum cannot be the plated product");
          validate_step(body.context, n.time, n.step);
          return {context_remove(body.context, n.time), body.output};
        } else if constexpr (std::is_same_v<N, SliceNode>) {
          if (n.stride < 1 || n.start < 0 || n.stop > n.bound || n.start >= n.stop) {
            type_error(t, "slice [" + std::to_string(n.start) + ":" + std::to_string(n.stop) + ":" +
                              std::to_string(n.stride) + "] outside ℤ" + std::to_string(n.bound));
          }
          return {TypeContext{{n.over, Domain::bint(slice_length(n.start, n.stop, n.stride))}},
                  Domain::bint(n.bound)};
        } else {
          if (n.parts.empty()) type_error(t, "concatenation of no parts");
          std::int64_t total = 0;
          TypeContext rest;
          std::optional<Domain> out;
          for (const auto& p : n.parts) {
            const auto& j = p->type();
            const auto* d = j.context.find(n.over);
            if (!d || !d->is_bounded()) type_error(t, "every part must have bounded input " + n.over);
            total += d->size();
            if (out && *out != j.output) {
              type_error(t, "parts disagree on output: " + out->to_string() + " vs " + j.output.to_string());
            }
            out = j.output;
            rest = union_or_type_error(t, rest, context_remove(j.context, n.over));
          }
          TypeContext ctx{{n.over, Domain::bint(total)}};
          ctx = context_union(ctx, rest);
          return {ctx, *out};
        }
      },
      t.node());
}

std::atomic<std::uint64_t> g_fresh_counter{0};

}  // namespace

const TypeContext& TermNode::free_vars() const {
  std::call_once(fv_once_, [&] { fv_ = compute_free_vars(*this); });
  return fv_;
}

const Judgement& TermNode::type() const {
  std::call_once(ty_once_, [&] {
    try {
      ty_ = compute_type(*this);
    } catch (...) {
      ty_error_ = std::current_exception();
    }
  });
  if (ty_error_) std::rethrow_exception(ty_error_);
  return *ty_;
}

// ---------------------------------------------------------------------------
// Constructors

Term tensor(TensorAtom atom) { return make(TensorLeaf{std::move(atom)}); }
Term number(double value) { return tensor(TensorAtom::scalar(value)); }
Term gaussian(GaussianAtom atom) { return make(GaussianLeaf{std::move(atom)}); }
Term delta(DeltaAtom atom) { return make(DeltaLeaf{std::move(atom)}); }

Term variable(const Name& name, const Domain& domain) {
  if (name.empty()) fail(ErrorCode::InvalidName, "empty variable name");
  return make(VariableNode{name, domain});
}

Term apply(LiftedOp op, std::vector<Term> args) { return make(ApplyNode{op, std::move(args)}); }
Term add(const Term& a, const Term& b) { return apply(LiftedOp::Add, {a, b}); }

Term subst(const Term& base, std::vector<Binding> bindings) {
  if (bindings.empty()) return base;
  return make(SubstNode{base, std::move(bindings)});
}

Term reduce(ReduceOp op, const Name& var, const Term& body) { return make(ReduceNode{op, var, body}); }

Term reduce(ReduceOp op, const std::vector<Name>& vars, const Term& body) {
  const auto& fv = body->free_vars();
  Term out = body;
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& v : vars) {
      const auto* d = fv.find(v);
      if (!d || d->is_real() != (pass == 0)) continue;
      out = reduce(op, v, out);
    }
  }
  return out;
}

Term reduce_all(ReduceOp op, const Term& body) { return reduce(op, body->free_vars().names(), body); }

Term markov(const Name& time, StepMatching step, const Term& body, ReduceOp sum_op) {
  return make(MarkovNode{time, std::move(step), body, sum_op});
}

Term slice(const Name& over, std::int64_t start, std::int64_t stop, std::int64_t stride, std::int64_t bound) {
  return make(SliceNode{over, start, stop, stride, bound});
}

Term cat(const Name& over, std::vector<Term> parts) { return make(CatNode{over, std::move(parts)}); }

Term sum_of(const std::vector<Term>& parts) {
  if (parts.empty()) return number(0.0);
  Term out = parts[0];
  for (std::size_t k = 1; k < parts.size(); ++k) out = add(out, parts[k]);
  return out;
}

const TypeContext& free_vars(const Term& t) { return t->free_vars(); }
Judgement infer_type(const Term& t) { return t->type(); }
bool is_ground(const Term& t) { return t->free_vars().empty(); }

Name fresh_name(const Name& base) {
  const auto k = g_fresh_counter.fetch_add(1, std::memory_order_relaxed) + 1;
  return base.substr(0, base.find('#')) + "#" + std::to_string(k);
}

// ---------------------------------------------------------------------------
// Substitution

Term alpha_rename(const Term& t, const Name& old) {
  if (const auto* r = t->as<ReduceNode>()) {
    if (r->var != old) return t;
    const auto* d = r->body->free_vars().find(old);
    if (!d) return reduce(r->op, fresh_name(old), r->body);
    const Name fresh = fresh_name(old);
    return reduce(r->op, fresh, substitute(r->body, old, variable(fresh, *d)));
  }
  if (const auto* m = t->as<MarkovNode>()) {
    if (m->time != old) return t;
    const auto* d = m->body->free_vars().find(old);
    const Name fresh = fresh_name(old);
    if (!d) return markov(fresh, m->step, m->body, m->sum_op);
    return markov(fresh, m->step, substitute(m->body, old, variable(fresh, *d)), m->sum_op);
  }
  return t;
}

Term substitute(const Term& t, const Name& name, const Term& value) { return substitute(t, {Binding{name, value}}); }

Term substitute(const Term& t, const std::vector<Binding>& all) {
  const auto& fv = t->free_vars();
  std::vector<Binding> bs;
  for (const auto& b : all) {
    if (fv.contains(b.name)) bs.push_back(b);
  }
  if (bs.empty()) return t;
  auto captures = [&](const Name& v) {
    return std::any_of(bs.begin(), bs.end(), [&](const Binding& b) { return b.value->free_vars().contains(v); });
  };

  switch (t->kind()) {
    case Kind::Variable: {
      const auto* v = t->as<VariableNode>();
      for (const auto& b : bs) {
        if (b.name == v->name) return b.value;
      }
      return t;
    }
    case Kind::Apply: {
      const auto* a = t->as<ApplyNode>();
      std::vector<Term> args;
      args.reserve(a->args.size());
      for (const auto& arg : a->args) args.push_back(substitute(arg, bs));
      return apply(a->op, std::move(args));
    }
    case Kind::Subst: {
      // base[inner][outer] = base[inner[outer], outer restricted to names inner leaves free]
      const auto* s = t->as<SubstNode>();
      std::vector<Binding> combined;
      for (const auto& b : s->bindings) combined.push_back({b.name, substitute(b.value, bs)});
      for (const auto& b : bs) {
        if (!binds(s->bindings, b.name) && s->base->free_vars().contains(b.name)) combined.push_back(b);
      }
      const auto k = s->base->kind();
      if (k == Kind::Tensor || k == Kind::Gaussian || k == Kind::Delta) return subst(s->base, std::move(combined));
      return substitute(s->base, combined);
    }
    case Kind::Reduce: {
      Term cur = t;
      if (captures(t->as<ReduceNode>()->var)) cur = alpha_rename(t, t->as<ReduceNode>()->var);
      const auto* r = cur->as<ReduceNode>();
      return reduce(r->op, r->var, substitute(r->body, bs));
    }
    case Kind::Markov: {
      const auto* m = t->as<MarkovNode>();
      for (const auto& [prev, curr] : m->step.pairs) {
        for (const auto& b : bs) {
          if (b.name == prev || b.name == curr) {
            fail(ErrorCode::InvalidSubstitution, "cannot substitute matched Markov variable " + b.name);
          }
        }
        if (captures(prev) || captures(curr)) {
          fail(ErrorCode::InvalidSubstitution, "substituted value mentions matched Markov variable");
        }
      }
      Term cur = captures(m->time) ? alpha_rename(t, m->time) : t;
      const auto* mm = cur->as<MarkovNode>();
      return markov(mm->time, mm->step, substitute(mm->body, bs), mm->sum_op);
    }
    case Kind::Cat: {
      const auto* c = t->as<CatNode>();
      if (binds(bs, c->over) || captures(c->over)) return subst(t, bs);
      std::vector<Term> parts;
      for (const auto& p : c->parts) parts.push_back(substitute(p, bs));
      return cat(c->over, std::move(parts));
    }
    case Kind::Tensor:
    case Kind::Gaussian:
    case Kind::Delta:
    case Kind::Slice:
      return subst(t, std::move(bs));
  }
  return t;
}

void validate_step(const TypeContext& ctx, const Name& time, const StepMatching& step) {
  std::set<Name> names;
  for (const auto& [prev, curr] : step.pairs) {
    if (prev == time || curr == time) {
      fail(ErrorCode::InvalidMatching, "(i) time variable " + time + " appears in the step matching");
    }
    names.insert(prev);
    names.insert(curr);
  }
  if (names.size() != 2 * step.pairs.size()) {
    fail(ErrorCode::InvalidMatching, "(ii) step matching is not one-to-one with disjoint names");
  }
  for (const auto& [prev, curr] : step.pairs) {
    const auto* dp = ctx.find(prev);
    const auto* dc = ctx.find(curr);
    if (!dp || !dc) fail(ErrorCode::InvalidMatching, "matched names " + prev + ", " + curr + " must be free in the body");
    if (*dp != *dc) {
      fail(ErrorCode::InvalidMatching, "(iii) " + prev + " and " + curr + " have types " + dp->to_string() + " and " +
                                           dc->to_string());
    }
  }
}

// ---------------------------------------------------------------------------
// Equality and printing

bool atoms_equal(const TensorAtom& a, const TensorAtom& b) {
  if (!(a.inputs() == b.inputs()) || a.output() != b.output()) return false;
  if (a.shares_buffer_with(b) && a.offset() == b.offset() && a.strides() == b.strides()) return true;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t k = 0; k < va.size(); ++k) {
    if (va[k] != vb[k] && !(std::isnan(va[k]) && std::isnan(vb[k]))) return false;
  }
  return true;
}

bool structurally_equal(const Term& a, const Term& b) {
  if (a == b) return true;
  if (a->kind() != b->kind()) return false;
  auto eq_list = [](const std::vector<Term>& x, const std::vector<Term>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (!structurally_equal(x[k], y[k])) return false;
    }
    return true;
  };
  switch (a->kind()) {
    case Kind::Tensor:
      return atoms_equal(a->as<TensorLeaf>()->atom, b->as<TensorLeaf>()->atom);
    case Kind::Gaussian: {
      const auto& x = a->as<GaussianLeaf>()->atom;
      const auto& y = b->as<GaussianLeaf>()->atom;
      return x.reals() == y.reals() && atoms_equal(x.info_vec(), y.info_vec()) &&
             atoms_equal(x.precision(), y.precision());
    }
    case Kind::Delta: {
      const auto& x = a->as<DeltaLeaf>()->atom;
      const auto& y = b->as<DeltaLeaf>()->atom;
      return x.name() == y.name() && atoms_equal(x.point(), y.point());
    }
    case Kind::Variable: {
      const auto* x = a->as<VariableNode>();
      const auto* y = b->as<VariableNode>();
      return x->name == y->name && x->domain == y->domain;
    }
    case Kind::Apply: {
      const auto* x = a->as<ApplyNode>();
      const auto* y = b->as<ApplyNode>();
      return x->op == y->op && eq_list(x->args, y->args);
    }
    case Kind::Subst: {
      const auto* x = a->as<SubstNode>();
      const auto* y = b->as<SubstNode>();
      if (x->bindings.size() != y->bindings.size() || !structurally_equal(x->base, y->base)) return false;
      for (std::size_t k = 0; k < x->bindings.size(); ++k) {
        if (x->bindings[k].name != y->bindings[k].name ||
            !structurally_equal(x->bindings[k].value, y->bindings[k].value)) {
          return false;
        }
      }
      return true;
    }
    case Kind::Reduce: {
      const auto* x = a->as<ReduceNode>();
      const auto* y = b->as<ReduceNode>();
      return x->op == y->op && x->var == y->var && structurally_equal(x->body, y->body);
    }
    case Kind::Markov: {
      const auto* x = a->as<MarkovNode>();
      const auto* y = b->as<MarkovNode>();
      return x->time == y->time && x->step.pairs == y->step.pairs && x->sum_op == y->sum_op &&
             structurally_equal(x->body, y->body);
    }
    case Kind::Slice: {
      const auto* x = a->as<SliceNode>();
      const auto* y = b->as<SliceNode>();
      return x->over == y->over && x->start == y->start && x->stop == y->stop && x->stride == y->stride &&
             x->bound == y->bound;
    }
    case Kind::Cat: {
      const auto* x = a->as<CatNode>();
      const auto* y = b->as<CatNode>();
      return x->over == y->over && eq_list(x->parts, y->parts);
    }
  }
  return false;
}

namespace {

void print(std::ostream& os, const Term& t) {
  switch (t->kind()) {
    case Kind::Tensor: {
      const auto& a = t->as<TensorLeaf>()->atom;
      if (a.inputs().empty() && a.output().is_real_scalar()) {
        os << std::setprecision(6) << a.item();
      } else {
        os << "Tensor(" << a.inputs().to_string() << ", " << a.output().to_string() << ")";
      }
      return;
    }
    case Kind::Gaussian:
      os << "Gaussian(" << t->as<GaussianLeaf>()->atom.inputs().to_string() << ")";
      return;
    case Kind::Delta: {
      const auto& d = t->as<DeltaLeaf>()->atom;
      os << "Delta(" << d.name() << ", Tensor(" << d.point().inputs().to_string() << ", " << d.domain().to_string()
         << "))";
      return;
    }
    case Kind::Variable:
      os << t->as<VariableNode>()->name;
      return;
    case Kind::Apply: {
      const auto* a = t->as<ApplyNode>();
      const char* infix = a->op == LiftedOp::Add ? " + " : a->op == LiftedOp::Sub ? " - " : a->op == LiftedOp::Mul ? " × " : nullptr;
      if (infix && a->args.size() == 2) {
        os << "(";
        print(os, a->args[0]);
        os << infix;
        print(os, a->args[1]);
        os << ")";
        return;
      }
      os << op_name(a->op) << "(";
      for (std::size_t k = 0; k < a->args.size(); ++k) {
        if (k) os << ", ";
        print(os, a->args[k]);
      }
      os << ")";
      return;
    }
    case Kind::Subst: {
      const auto* s = t->as<SubstNode>();
      print(os, s->base);
      os << "[";
      for (std::size_t k = 0; k < s->bindings.size(); ++k) {
        if (k) os << ", ";
        os << s->bindings[k].name << " := ";
        print(os, s->bindings[k].value);
      }
      os << "]";
      return;
    }
    case Kind::Reduce: {
      const auto* r = t->as<ReduceNode>();
      os << (r->op == ReduceOp::LogSumExp ? "Σ_" : r->op == ReduceOp::Add ? "Π_" : "max_") << r->var << " ";
      print(os, r->body);
      return;
    }
    case Kind::Markov: {
      const auto* m = t->as<MarkovNode>();
      os << "Π_{" << m->time << "/{";
      for (std::size_t k = 0; k < m->step.pairs.size(); ++k) {
        if (k) os << ", ";
        os << "(" << m->step.pairs[k].first << "," << m->step.pairs[k].second << ")";
      }
      os << "}}" << (m->sum_op == ReduceOp::Max ? "^max " : " ");
      print(os, m->body);
      return;
    }
    case Kind::Slice: {
      const auto* s = t->as<SliceNode>();
      os << "Slice(" << s->over << ", " << s->start << ", " << s->stop << ", " << s->stride << ", " << s->bound << ")";
      return;
    }
    case Kind::Cat: {
      const auto* c = t->as<CatNode>();
      os << "Cat_" << c->over << "(";
      for (std::size_t k = 0; k < c->parts.size(); ++k) {
        if (k) os << ", ";
        print(os, c->parts[k]);
      }
      os << ")";
      return;
    }
  }
}

}  // namespace

std::string to_string(const Term& t) {
  std::ostringstream os;
  print(os, t);
  return os.str();
}

}  // namespace funsor
