#include "funsor/interp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "funsor/markov.hpp"

namespace funsor {

namespace {

constexpr int kMaxDepth = 4000;

}  // namespace

std::uint64_t default_fuel() {
  if (const char* env = std::getenv("FUNSOR_FUEL")) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (end && *end == '\0' && v > 0) return v;
  }
  return 10000;
}

// ---------------------------------------------------------------------------
// Evaluator

struct Evaluator::Shared {
  std::uint64_t fuel_limit = 0;
  std::uint64_t used = 0;
  int depth = 0;
  EvalOptions options;
  EvalStats stats;
};

Evaluator::Evaluator(const Interpretation& interp, EvalOptions options)
    : interp_(&interp), shared_(std::make_shared<Shared>()) {
  shared_->fuel_limit = options.fuel ? options.fuel : default_fuel();
  shared_->options = options;
}

Evaluator Evaluator::with(const Interpretation& interp) const { return Evaluator(&interp, shared_); }
EvalOptions& Evaluator::options() { return shared_->options; }
EvalStats& Evaluator::stats() { return shared_->stats; }
RngState& Evaluator::rng() { return shared_->options.rng; }

std::optional<Term> Evaluator::try_rules(const Term& t, Phase phase) {
  for (const Interpretation* i = interp_; i; i = i->fallback()) {
    for (const auto& rule : i->rules()) {
      if (rule.phase != phase || rule.head != t->kind()) continue;
      if (rule.guard && !rule.guard(t)) continue;
      if (auto r = rule.handler(t, *this)) {
        if (++shared_->used > shared_->fuel_limit) {
          fail(ErrorCode::FuelExhausted, "more than " + std::to_string(shared_->fuel_limit) + " rewrites");
        }
        ++shared_->stats.rewrites;
        return r;
      }
    }
  }
  return std::nullopt;
}

Term Evaluator::rebuild(const Term& t) {
  auto eval_all = [&](const std::vector<Term>& xs, bool& changed) {
    std::vector<Term> out;
    out.reserve(xs.size());
    for (const auto& x : xs) {
      out.push_back(eval(x));
      changed = changed || out.back() != x;
    }
    return out;
  };
  bool changed = false;
  switch (t->kind()) {
    case Kind::Apply: {
      const auto* a = t->as<ApplyNode>();
      auto args = eval_all(a->args, changed);
      return changed ? apply(a->op, std::move(args)) : t;
    }
    case Kind::Subst: {
      const auto* s = t->as<SubstNode>();
      Term base = eval(s->base);
      changed = base != s->base;
      std::vector<Binding> bs;
      for (const auto& b : s->bindings) {
        bs.push_back({b.name, eval(b.value)});
        changed = changed || bs.back().value != b.value;
      }
      return changed ? subst(base, std::move(bs)) : t;
    }
    case Kind::Reduce: {
      const auto* r = t->as<ReduceNode>();
      Term body = eval(r->body);
      return body != r->body ? reduce(r->op, r->var, body) : t;
    }
    case Kind::Markov: {
      const auto* m = t->as<MarkovNode>();
      Term body = eval(m->body);
      return body != m->body ? markov(m->time, m->step, body, m->sum_op) : t;
    }
    case Kind::Cat: {
      const auto* c = t->as<CatNode>();
      auto parts = eval_all(c->parts, changed);
      return changed ? cat(c->over, std::move(parts)) : t;
    }
    default:
      return t;
  }
}

Term Evaluator::eval(const Term& t) {
  struct DepthGuard {
    int& d;
    explicit DepthGuard(int& x) : d(x) { ++d; }
    ~DepthGuard() { --d; }
  } guard(shared_->depth);
  if (shared_->depth > kMaxDepth) fail(ErrorCode::FuelExhausted, "evaluation nested too deeply");
  if (auto r = try_rules(t, Phase::Pre)) return *r;
  Term rebuilt = rebuild(t);
  if (auto r = try_rules(rebuilt, Phase::Post)) return *r;
  return rebuilt;
}

Term Evaluator::sub(const Term& t) {
  struct FuelScope {
    std::uint64_t& used;
    std::uint64_t saved;
    explicit FuelScope(std::uint64_t& u) : used(u), saved(u) { used = 0; }
    ~FuelScope() { used = saved; }
  } scope(shared_->used);
  return eval(t);
}

Term interpret(const Interpretation& interp, const Term& t, EvalOptions options) {
  infer_type(t);
  Evaluator ev(interp, options);
  return ev.eval(t);
}

namespace {
thread_local std::vector<const Interpretation*> g_stack;
}

void push_interpretation(const Interpretation& interp) { g_stack.push_back(&interp); }

void pop_interpretation() {
  if (g_stack.empty()) fail(ErrorCode::StackUnderflow, "no pushed interpretation to pop");
  g_stack.pop_back();
}

const Interpretation& current_interpretation() { return g_stack.empty() ? exact() : *g_stack.back(); }

Term interpret(const Term& t) { return interpret(current_interpretation(), t); }

double scalar_value(const Term& t) {
  const auto* leaf = t->as<TensorLeaf>();
  if (!leaf || !leaf->atom.inputs().empty() || !leaf->atom.output().is_real_scalar()) {
    fail(ErrorCode::NotClosed, "result is not a ground real: " + to_string(t));
  }
  return leaf->atom.item();
}

// ---------------------------------------------------------------------------
// Normal form

void add_tensor(NormalForm& nf, const TensorAtom& t) {
  nf.tensor = nf.tensor ? tensor_apply(LiftedOp::Add, *nf.tensor, t) : t;
}

void add_gaussian(NormalForm& nf, const GaussianAtom& g) {
  nf.gaussian = nf.gaussian ? gaussian_fuse(*nf.gaussian, g) : g;
}

namespace {

bool is_real_scalar_term(const Term& t) {
  try {
    return t->type().output.is_real_scalar();
  } catch (const Error&) {
    return false;
  }
}

void collect(const Term& t, NormalForm& nf) {
  if (const auto* a = t->as<ApplyNode>(); a && a->op == LiftedOp::Add && is_real_scalar_term(t)) {
    for (const auto& arg : a->args) collect(arg, nf);
    return;
  }
  if (const auto* leaf = t->as<TensorLeaf>(); leaf && leaf->atom.output().is_real_scalar()) {
    add_tensor(nf, leaf->atom);
  } else if (const auto* g = t->as<GaussianLeaf>()) {
    add_gaussian(nf, g->atom);
  } else if (const auto* d = t->as<DeltaLeaf>()) {
    nf.deltas.push_back(d->atom);
  } else {
    nf.lazy_rest.push_back(t);
  }
}

// Substitutes every delta's point into the other parts until nothing changes.
void apply_delta_triggers(NormalForm& nf, Evaluator& ev) {
  for (int round = 0; round < 64; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < nf.deltas.size(); ++i) {
      const DeltaAtom d = nf.deltas[i];
      const Name& v = d.name();
      if (nf.tensor && nf.tensor->inputs().contains(v)) {
        nf.tensor = tensor_index(*nf.tensor, v, d.point());
        changed = true;
      }
      if (nf.gaussian) {
        if (nf.gaussian->batch().contains(v)) {
          IndexBinding b{v, d.point()};
          nf.gaussian = gaussian_index_batch(*nf.gaussian, std::span<const IndexBinding>(&b, 1));
          changed = true;
        } else if (nf.gaussian->has_real(v)) {
          auto r = gaussian_substitute(*nf.gaussian, v, d.point());
          nf.gaussian = r.gaussian;
          add_tensor(nf, r.tensor);
          changed = true;
        }
      }
      for (std::size_t j = 0; j < nf.deltas.size(); ++j) {
        if (j == i) continue;
        if (nf.deltas[j].point().inputs().contains(v)) {
          IndexBinding b{v, d.point()};
          nf.deltas[j] = delta_index_batch(nf.deltas[j], std::span<const IndexBinding>(&b, 1));
          changed = true;
        }
      }
      for (std::size_t j = nf.deltas.size(); j-- > 0;) {
        if (j == i || nf.deltas[j].name() != v) continue;
        if (d.domain().is_bounded()) {
          add_tensor(nf, delta_indicator(nf.deltas[j], d.point()));
        } else {
          nf.lazy_rest.push_back(subst(delta(nf.deltas[j]), {{v, tensor(d.point())}}));
        }
        nf.deltas.erase(nf.deltas.begin() + static_cast<std::ptrdiff_t>(j));
        if (j < i) --i;
        changed = true;
      }
      std::vector<Term> keep;
      std::vector<Term> fresh;
      for (const auto& part : nf.lazy_rest) {
        if (part->free_vars().contains(v)) {
          fresh.push_back(ev.eval(substitute(part, v, tensor(d.point()))));
          changed = true;
        } else {
          keep.push_back(part);
        }
      }
      nf.lazy_rest = std::move(keep);
      for (const auto& f : fresh) collect(f, nf);
    }
    if (!changed) return;
  }
}

bool is_zero_scalar(const TensorAtom& t) {
  return t.inputs().empty() && t.output().is_real_scalar() && t.item() == 0.0;
}

}  // namespace

NormalForm normalize(const Term& t, Evaluator& ev) {
  NormalForm nf;
  collect(t, nf);
  apply_delta_triggers(nf, ev);
  return nf;
}

NormalForm normalize(const Term& t) {
  Evaluator ev(exact());
  return normalize(t, ev);
}

Term to_term(const NormalForm& nf) {
  std::vector<Term> parts;
  for (const auto& d : nf.deltas) parts.push_back(delta(d));
  const bool others = !nf.deltas.empty() || nf.gaussian || !nf.lazy_rest.empty();
  if (nf.tensor && !(others && is_zero_scalar(*nf.tensor))) parts.push_back(tensor(*nf.tensor));
  if (nf.gaussian) parts.push_back(gaussian(*nf.gaussian));
  for (const auto& l : nf.lazy_rest) parts.push_back(l);
  return sum_of(parts);
}

std::optional<Term> delta_product_trigger(const DeltaAtom& d, const Term& other, Evaluator& ev) {
  if (!other->free_vars().contains(d.name())) return std::nullopt;
  return add(delta(d), ev.eval(substitute(other, d.name(), tensor(d.point()))));
}

std::optional<Term> delta_sum_eliminate(const DeltaAtom& d, const std::optional<Term>& rest) {
  if (rest && (*rest)->free_vars().contains(d.name())) return std::nullopt;
  // The point's batch variables stay free (with log-mass 0) even when nothing
  // else mentions them.
  TypeContext missing;
  for (const auto& e : d.point().inputs()) {
    if (!rest || !(*rest)->free_vars().contains(e.name)) missing.add(e.name, e.domain);
  }
  if (missing.empty()) return rest ? *rest : number(0.0);
  Term zeros = tensor(TensorAtom::filled(missing, Domain::real(), 0.0));
  return rest ? add(*rest, zeros) : zeros;
}

// ---------------------------------------------------------------------------
// Affine substitution

namespace {

bool has_real_free(const Term& t) {
  const auto& fv = t->free_vars();
  return std::any_of(fv.begin(), fv.end(), [](const ContextEntry& e) { return e.domain.is_real(); });
}

TensorAtom identity_coeff(std::int64_t d) {
  std::vector<double> v(d * d, 0.0);
  for (std::int64_t k = 0; k < d; ++k) v[k * d + k] = 1.0;
  return TensorAtom(TypeContext{}, Domain::reals({d, d}), std::move(v));
}

}  // namespace

bool is_affine(const Term& t) {
  if (!has_real_free(t)) return true;
  switch (t->kind()) {
    case Kind::Variable:
      return true;
    case Kind::Apply: {
      const auto* a = t->as<ApplyNode>();
      switch (a->op) {
        case LiftedOp::Add:
        case LiftedOp::Sub:
          return is_affine(a->args[0]) && is_affine(a->args[1]);
        case LiftedOp::Neg:
          return is_affine(a->args[0]);
        case LiftedOp::Take:
          return is_affine(a->args[0]) && !has_real_free(a->args[1]);
        case LiftedOp::Mul:
          return (is_affine(a->args[0]) && !has_real_free(a->args[1])) ||
                 (!has_real_free(a->args[0]) && is_affine(a->args[1]));
        default:
          return false;
      }
    }
    default:
      return false;
  }
}

AffineBinding extract_affine(const Name& target, const Term& expr, Evaluator& ev) {
  if (!is_affine(expr)) fail(ErrorCode::NotAffine, "not an affine expression: " + to_string(expr));
  const auto out = expr->type().output;
  if (!out.is_real()) fail(ErrorCode::TypeError, "affine expression must be real-valued");
  const auto dt = num_elements(out);
  std::vector<ContextEntry> inputs;
  for (const auto& e : expr->free_vars()) {
    if (e.domain.is_real()) inputs.push_back(e);
  }
  auto zero_of = [](const Domain& d) { return tensor(TensorAtom::filled(TypeContext{}, d, 0.0)); };
  auto eval_tensor = [&](const std::vector<Binding>& bs) {
    Term r = ev.eval(substitute(expr, bs));
    const auto* leaf = r->as<TensorLeaf>();
    if (!leaf) fail(ErrorCode::NotAffine, "probe did not evaluate to a tensor: " + to_string(r));
    return leaf->atom;
  };

  std::vector<Binding> zeros;
  for (const auto& u : inputs) zeros.push_back({u.name, zero_of(u.domain)});
  AffineBinding result{target, eval_tensor(zeros), {}};

  for (std::size_t j = 0; j < inputs.size(); ++j) {
    const auto& u = inputs[j];
    const auto du = num_elements(u.domain);
    const Name p = fresh_name("probe");
    std::vector<double> eye(du * du, 0.0);
    for (std::int64_t k = 0; k < du; ++k) eye[k * du + k] = 1.0;
    std::vector<Binding> bs = zeros;
    bs[j].value = tensor(TensorAtom(TypeContext{{p, Domain::bint(du)}}, u.domain, std::move(eye)));
    auto diff = tensor_apply(LiftedOp::Sub, eval_tensor(bs), result.constant);
    if (!diff.inputs().contains(p)) {
      // expr does not depend on u after all
      diff = broadcast_to(diff, context_union(diff.inputs(), TypeContext{{p, Domain::bint(du)}}));
    }
    TypeContext order = context_remove(diff.inputs(), p);
    order.add(p, Domain::bint(du));
    const auto vals = broadcast_to(diff, order).values();  // [batch..., du, dt]
    const auto nb = static_cast<std::int64_t>(vals.size()) / (du * dt);
    std::vector<double> coeff(vals.size());
    for (std::int64_t b = 0; b < nb; ++b) {
      for (std::int64_t q = 0; q < du; ++q) {
        for (std::int64_t r = 0; r < dt; ++r) coeff[(b * dt + r) * du + q] = vals[(b * du + q) * dt + r];
      }
    }
    result.coeffs.push_back(
        {u, TensorAtom(context_remove(order, p), Domain::reals({dt, du}), std::move(coeff))});
  }
  return result;
}

TensorGaussian affine_substitute(const GaussianAtom& g, const Name& v, const Term& expr, Evaluator& ev) {
  auto b = extract_affine(v, expr, ev);
  return gaussian_affine(g, std::span<const AffineBinding>(&b, 1));
}

// ---------------------------------------------------------------------------
// Exact rules

namespace {

std::vector<Binding> relevant(const SubstNode& s) {
  std::vector<Binding> out;
  const auto& fv = s.base->free_vars();
  for (const auto& b : s.bindings) {
    if (fv.contains(b.name)) out.push_back(b);
  }
  return out;
}

const TensorAtom* tensor_of(const Term& t) {
  const auto* leaf = t->as<TensorLeaf>();
  return leaf ? &leaf->atom : nullptr;
}

std::optional<Term> subst_tensor(const Term& t, Evaluator&) {
  const auto* s = t->as<SubstNode>();
  const auto& base = s->base->as<TensorLeaf>()->atom;
  auto bs = relevant(*s);
  if (bs.empty()) return s->base;
  std::vector<IndexBinding> idx;
  for (const auto& b : bs) {
    const auto* v = tensor_of(b.value);
    if (!v) return std::nullopt;
    idx.push_back({b.name, *v});
  }
  return tensor(tensor_index(base, idx));
}

std::optional<Term> subst_gaussian(const Term& t, Evaluator& ev) {
  const auto* s = t->as<SubstNode>();
  GaussianAtom g = s->base->as<GaussianLeaf>()->atom;
  auto bs = relevant(*s);
  if (bs.empty()) return s->base;
  std::vector<IndexBinding> idx;
  std::vector<Binding> reals;
  for (const auto& b : bs) {
    if (g.batch().contains(b.name)) {
      const auto* v = tensor_of(b.value);
      if (!v) return std::nullopt;
      idx.push_back({b.name, *v});
    } else {
      reals.push_back(b);
    }
  }
  // Real values must be ground-able before touching any data.
  for (const auto& b : reals) {
    if (!b.value->as<TensorLeaf>() && !b.value->as<VariableNode>() && !is_affine(b.value)) return std::nullopt;
  }
  if (!idx.empty()) g = gaussian_index_batch(g, idx);
  if (reals.empty()) return gaussian(g);

  // Pure renaming is zero-copy.
  bool renames = true;
  std::map<Name, Name> mapping;
  for (const auto& b : reals) {
    const auto* v = b.value->as<VariableNode>();
    if (!v || v->domain != g.real_domain(b.name)) {
      renames = false;
      break;
    }
    mapping[b.name] = v->name;
  }
  if (renames) {
    TypeContext seen;
    for (const auto& e : g.reals()) {
      auto it = mapping.find(e.name);
      const Name n = it == mapping.end() ? e.name : it->second;
      if (seen.contains(n) || g.batch().contains(n)) {
        renames = false;
        break;
      }
      seen.add(n, e.domain);
    }
    if (renames) return gaussian(gaussian_rename_reals(g, mapping));
  }

  std::vector<AffineBinding> affine;
  for (const auto& b : reals) {
    if (const auto* v = tensor_of(b.value)) {
      affine.push_back({b.name, *v, {}});
    } else if (const auto* var = b.value->as<VariableNode>()) {
      const auto d = num_elements(var->domain);
      affine.push_back({b.name, TensorAtom::filled(TypeContext{}, var->domain, 0.0), {{{var->name, var->domain}, identity_coeff(d)}}});
    } else {
      affine.push_back(extract_affine(b.name, b.value, ev));
    }
  }
  auto r = gaussian_affine(g, affine);
  NormalForm nf;
  const auto w = r.tensor.values();
  if (!std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; }) || !r.gaussian) add_tensor(nf, r.tensor);
  if (r.gaussian) nf.gaussian = r.gaussian;
  return to_term(nf);
}

std::optional<Term> subst_delta(const Term& t, Evaluator&) {
  const auto* s = t->as<SubstNode>();
  DeltaAtom d = s->base->as<DeltaLeaf>()->atom;
  auto bs = relevant(*s);
  if (bs.empty()) return s->base;
  std::vector<IndexBinding> idx;
  std::optional<Term> own;
  for (const auto& b : bs) {
    if (b.name == d.name()) {
      own = b.value;
      continue;
    }
    const auto* v = tensor_of(b.value);
    if (!v) return std::nullopt;
    idx.push_back({b.name, *v});
  }
  if (own) {
    const auto* var = (*own)->as<VariableNode>();
    const auto* v = tensor_of(*own);
    if (!var && !(v && d.domain().is_bounded())) return std::nullopt;
    if (!idx.empty()) d = delta_index_batch(d, idx);
    if (var) return delta(delta_rename(d, var->name));
    return tensor(delta_indicator(d, *v));
  }
  return delta(delta_index_batch(d, idx));
}

std::optional<Term> eval_slice(const Term& t, Evaluator&) {
  const auto* s = t->as<SliceNode>();
  const auto len = slice_length(s->start, s->stop, s->stride);
  std::vector<double> v(len);
  for (std::int64_t k = 0; k < len; ++k) v[k] = static_cast<double>(s->start + k * s->stride);
  return tensor(TensorAtom(TypeContext{{s->over, Domain::bint(len)}}, Domain::bint(s->bound), std::move(v)));
}

bool lazy_mentions(const NormalForm& nf, const Name& v) {
  return std::any_of(nf.lazy_rest.begin(), nf.lazy_rest.end(),
                     [&](const Term& p) { return p->free_vars().contains(v); });
}

std::optional<Term> exact_reduce(const Term& t, Evaluator& ev) {
  const auto* r = t->as<ReduceNode>();
  const Name& v = r->var;
  const auto* d = r->body->free_vars().find(v);
  if (!d) {
    return std::nullopt;
  }
  if (d->is_bounded() && d->size() == 1) {
    return ev.eval(substitute(r->body, v, tensor(TensorAtom::index_value(0, 1))));
  }
  NormalForm nf = normalize(r->body, ev);

  if (r->op == ReduceOp::Add) {
    const auto n = d->size();
    if (!nf.deltas.empty() || !nf.lazy_rest.empty()) return std::nullopt;
    if (nf.tensor) {
      nf.tensor = nf.tensor->inputs().contains(v)
                      ? tensor_reduce(ReduceOp::Add, *nf.tensor, v)
                      : tensor_apply(LiftedOp::Mul, *nf.tensor, TensorAtom::scalar(static_cast<double>(n)));
    }
    if (nf.gaussian) {
      nf.gaussian = nf.gaussian->batch().contains(v) ? gaussian_plated_product(*nf.gaussian, v)
                                                       : gaussian_scale(*nf.gaussian, static_cast<double>(n));
    }
    return to_term(nf);
  }

  if (lazy_mentions(nf, v)) return std::nullopt;
  for (std::size_t k = 0; k < nf.deltas.size(); ++k) {
    if (nf.deltas[k].name() == v) {
      const TypeContext pinned = nf.deltas[k].point().inputs();
      nf.deltas.erase(nf.deltas.begin() + static_cast<std::ptrdiff_t>(k));
      const auto kept = to_term(nf)->free_vars();
      TypeContext missing;
      for (const auto& e : pinned) {
        if (!kept.contains(e.name)) missing.add(e.name, e.domain);
      }
      if (!missing.empty()) add_tensor(nf, TensorAtom::filled(missing, Domain::real(), 0.0));
      return to_term(nf);
    }
  }
  for (const auto& dl : nf.deltas) {
    if (dl.point().inputs().contains(v)) return std::nullopt;
  }
  if (d->is_real()) {
    if (r->op != ReduceOp::LogSumExp || !nf.gaussian || !nf.gaussian->has_real(v)) return std::nullopt;
    auto m = gaussian_marginalize(*nf.gaussian, v);
    nf.gaussian = m.gaussian;
    add_tensor(nf, m.tensor);
    return to_term(nf);
  }
  if (nf.gaussian && nf.gaussian->batch().contains(v)) return std::nullopt;
  if (!nf.tensor || !nf.tensor->inputs().contains(v)) return std::nullopt;
  nf.tensor = tensor_reduce(r->op, *nf.tensor, v);
  return to_term(nf);
}

// Plated product of a body the atoms cannot absorb: expand over the plate.
std::optional<Term> unroll_plate(const Term& t, Evaluator& ev) {
  const auto* r = t->as<ReduceNode>();
  const auto* d = r->body->free_vars().find(r->var);
  if (!d || !d->is_bounded()) return std::nullopt;
  std::vector<Term> parts;
  for (std::int64_t k = 0; k < d->size(); ++k) {
    parts.push_back(substitute(r->body, r->var, tensor(TensorAtom::index_value(k, d->size()))));
  }
  return ev.eval(sum_of(parts));
}

std::optional<Term> exact_markov(const Term& t, Evaluator& ev) {
  const auto* m = t->as<MarkovNode>();
  if (ev.options().scan == MarkovScan::Sequential) {
    return markov_sequential(m->body, m->time, m->step, m->sum_op, ev);
  }
  std::int64_t levels = 0;
  Term out = markov_parallel(m->body, m->time, m->step, m->sum_op, ev, &levels);
  ev.stats().markov_levels = levels;
  return out;
}

std::optional<Term> exact_cat(const Term& t, Evaluator& ev) {
  const auto* c = t->as<CatNode>();
  const Name& over = c->over;
  if (std::all_of(c->parts.begin(), c->parts.end(), [](const Term& p) { return p->as<TensorLeaf>() != nullptr; })) {
    std::vector<TensorAtom> ts;
    for (const auto& p : c->parts) ts.push_back(p->as<TensorLeaf>()->atom);
    return tensor(tensor_cat(over, ts));
  }
  if (!t->type().output.is_real_scalar()) return std::nullopt;
  std::vector<NormalForm> nfs;
  TypeContext discrete;
  std::vector<ContextEntry> reals;
  bool any_gaussian = false;
  for (const auto& p : c->parts) {
    nfs.push_back(normalize(p, ev));
    const auto& nf = nfs.back();
    if (!nf.deltas.empty() || !nf.lazy_rest.empty()) return std::nullopt;
    // Parts differ in the length of `over`, so it is left out of the union.
    auto merge = [&](const TypeContext& ctx) {
      for (const auto& e : ctx) {
        if (e.name != over) discrete.add(e.name, e.domain);
      }
    };
    if (nf.tensor) merge(nf.tensor->inputs());
    if (nf.gaussian) {
      any_gaussian = true;
      merge(nf.gaussian->batch());
      for (const auto& e : nf.gaussian->reals()) {
        if (std::none_of(reals.begin(), reals.end(), [&](const ContextEntry& x) { return x.name == e.name; })) {
          reals.push_back(e);
        }
      }
    }
  }
  const TypeContext& rest = discrete;
  std::vector<TensorAtom> ts;
  std::vector<GaussianAtom> gs;
  for (std::size_t k = 0; k < nfs.size(); ++k) {
    const auto len = c->parts[k]->type().context.at(over).size();
    TypeContext ctx{{over, Domain::bint(len)}};
    ctx = context_union(ctx, rest);
    auto tk = nfs[k].tensor ? *nfs[k].tensor : TensorAtom::scalar(0.0);
    ts.push_back(broadcast_to(tk, ctx));
    if (any_gaussian) {
      std::int64_t dim = 0;
      for (const auto& e : reals) dim += num_elements(e.domain);
      GaussianAtom gk = nfs[k].gaussian
                            ? gaussian_embed_reals(*nfs[k].gaussian, reals)
                            : GaussianAtom::unchecked(reals, TensorAtom::filled(TypeContext{}, Domain::reals({dim}), 0.0),
                                                      TensorAtom::filled(TypeContext{}, Domain::reals({dim, dim}), 0.0));
      gs.push_back(gaussian_broadcast_batch(gk, ctx));
    }
  }
  NormalForm out;
  out.tensor = tensor_cat(over, ts);
  if (any_gaussian) out.gaussian = gaussian_cat(over, gs);
  return to_term(out);
}

bool base_is(const Term& t, Kind k) { return t->as<SubstNode>()->base->kind() == k; }

bool all_args_tensors(const Term& t) {
  const auto* a = t->as<ApplyNode>();
  return std::all_of(a->args.begin(), a->args.end(), [](const Term& x) { return x->as<TensorLeaf>() != nullptr; });
}

Interpretation make_lazy() {
  Interpretation i("lazy");
  i.add_rule({"lazy.subst.push", Kind::Subst,
              [](const Term& t) {
                const auto* s = t->as<SubstNode>();
                switch (s->base->kind()) {
                  case Kind::Tensor:
                  case Kind::Gaussian:
                  case Kind::Delta:
                  case Kind::Slice:
                    return false;
                  case Kind::Cat: {
                    const Name& over = s->base->as<CatNode>()->over;
                    return std::none_of(s->bindings.begin(), s->bindings.end(), [&](const Binding& b) {
                      return b.name == over || b.value->free_vars().contains(over);
                    });
                  }
                  default:
                    return true;
                }
              },
              [](const Term& t, Evaluator& ev) -> std::optional<Term> {
                const auto* s = t->as<SubstNode>();
                Term pushed = substitute(s->base, s->bindings);
                if (const auto* ps = pushed->as<SubstNode>(); ps && ps->base == s->base) return std::nullopt;
                return ev.eval(pushed);
              }});
  return i;
}

Interpretation make_exact() {
  Interpretation i("exact", &lazy());
  i.add_rule({"exact.variable", Kind::Variable,
              [](const Term& t) { return t->as<VariableNode>()->domain.is_bounded(); },
              [](const Term& t, Evaluator&) -> std::optional<Term> {
                const auto* v = t->as<VariableNode>();
                return tensor(TensorAtom::arange(v->name, v->domain.size()));
              }});
  i.add_rule({"exact.slice", Kind::Slice, nullptr, eval_slice});
  i.add_rule({"exact.apply.tensor", Kind::Apply, all_args_tensors,
              [](const Term& t, Evaluator&) -> std::optional<Term> {
                const auto* a = t->as<ApplyNode>();
                std::vector<TensorAtom> args;
                for (const auto& x : a->args) args.push_back(x->as<TensorLeaf>()->atom);
                return tensor(tensor_apply(a->op, args));
              }});
  i.add_rule({"exact.apply.add", Kind::Apply,
              [](const Term& t) { return t->as<ApplyNode>()->op == LiftedOp::Add && is_real_scalar_term(t); },
              [](const Term& t, Evaluator& ev) -> std::optional<Term> { return to_term(normalize(t, ev)); }});
  i.add_rule({"exact.subst.tensor", Kind::Subst, [](const Term& t) { return base_is(t, Kind::Tensor); }, subst_tensor});
  i.add_rule(
      {"exact.subst.gaussian", Kind::Subst, [](const Term& t) { return base_is(t, Kind::Gaussian); }, subst_gaussian});
  i.add_rule({"exact.subst.delta", Kind::Subst, [](const Term& t) { return base_is(t, Kind::Delta); }, subst_delta});
  i.add_rule({"exact.reduce", Kind::Reduce, nullptr, exact_reduce});
  i.add_rule({"exact.reduce.unroll", Kind::Reduce,
              [](const Term& t) { return t->as<ReduceNode>()->op == ReduceOp::Add; }, unroll_plate});
  i.add_rule({"exact.markov", Kind::Markov, nullptr, exact_markov});
  i.add_rule({"exact.cat", Kind::Cat, nullptr, exact_cat});
  return i;
}

}  // namespace

const Interpretation& lazy() {
  static const Interpretation i = make_lazy();
  return i;
}

const Interpretation& exact() {
  static const Interpretation i = make_exact();
  return i;
}

}  // namespace funsor
