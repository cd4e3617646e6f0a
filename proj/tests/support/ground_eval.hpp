#pragma once

// Brute-force evaluation of a term at a ground assignment: leaves are read
// directly from their arrays, discrete reductions enumerate, and a real
// reduction is only accepted when a delta on that variable pins it.

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "funsor/funsor.hpp"

namespace oracle {

using Ground = std::map<std::string, std::vector<double>>;

inline std::vector<std::int64_t> batch_index(const funsor::TypeContext& ctx, const Ground& g) {
  std::vector<std::int64_t> idx;
  for (const auto& e : ctx) idx.push_back(static_cast<std::int64_t>(g.at(e.name).at(0)));
  return idx;
}

inline std::vector<double> read_output(const funsor::TensorAtom& t, const Ground& g) {
  auto idx = batch_index(t.inputs(), g);
  const auto n = t.output().is_bounded() ? 1 : funsor::num_elements(t.output());
  std::vector<double> out;
  const auto& shape = t.output().shape();
  std::vector<std::int64_t> sub(shape.size(), 0);
  for (std::int64_t k = 0; k < n; ++k) {
    auto full = idx;
    full.insert(full.end(), sub.begin(), sub.end());
    out.push_back(t.at(full));
    for (std::size_t d = sub.size(); d-- > 0;) {
      if (++sub[d] < shape[d]) break;
      sub[d] = 0;
    }
  }
  return out;
}

inline double gaussian_value(const funsor::GaussianAtom& g, const Ground& a) {
  const auto info = read_output(g.info_vec(), a);
  const auto prec = read_output(g.precision(), a);
  std::vector<double> x;
  for (const auto& e : g.reals()) {
    const auto& v = a.at(e.name);
    x.insert(x.end(), v.begin(), v.end());
  }
  const auto d = x.size();
  double q = 0.0;
  double l = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    l += info[r] * x[r];
    for (std::size_t c = 0; c < d; ++c) q += x[r] * prec[r * d + c] * x[c];
  }
  return l - 0.5 * q;
}

inline double delta_value(const funsor::DeltaAtom& d, const Ground& a) {
  const auto p = read_output(d.point(), a);
  const auto& v = a.at(d.name());
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (std::abs(p[k] - v[k]) > 1e-12 * std::max(1.0, std::abs(p[k]))) return -std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

// Summands of a sum, looking through inner reductions (a delta whose point
// does not depend on the inner variable pins the outer one all the same).
inline void summands(const funsor::Term& t, std::vector<funsor::Term>& out) {
  if (const auto* a = t->as<funsor::ApplyNode>(); a && a->op == funsor::LiftedOp::Add) {
    for (const auto& x : a->args) summands(x, out);
  } else if (const auto* r = t->as<funsor::ReduceNode>(); r && r->op != funsor::ReduceOp::Add) {
    summands(r->body, out);
  } else {
    out.push_back(t);
  }
}

inline double ground_eval(const funsor::Term& t, Ground a) {
  using namespace funsor;
  if (const auto* x = t->as<TensorLeaf>()) return read_output(x->atom, a).at(0);
  if (const auto* x = t->as<GaussianLeaf>()) return gaussian_value(x->atom, a);
  if (const auto* x = t->as<DeltaLeaf>()) return delta_value(x->atom, a);
  if (const auto* x = t->as<ApplyNode>()) {
    if (x->op != LiftedOp::Add) throw std::runtime_error("ground_eval: unsupported op");
    double s = 0;
    for (const auto& arg : x->args) s += ground_eval(arg, a);
    return s;
  }
  if (const auto* r = t->as<ReduceNode>()) {
    const auto& d = r->body->free_vars().at(r->var);
    if (d.is_real()) {
      std::vector<Term> parts;
      summands(r->body, parts);
      for (const auto& p : parts) {
        const auto* dl = p->as<DeltaLeaf>();
        if (dl && dl->atom.name() == r->var) {
          a[r->var] = read_output(dl->atom.point(), a);
          return ground_eval(r->body, a);
        }
      }
      throw std::runtime_error("ground_eval: real reduction without a pinning delta");
    }
    std::vector<double> vals;
    for (std::int64_t k = 0; k < d.size(); ++k) {
      a[r->var] = {static_cast<double>(k)};
      vals.push_back(ground_eval(r->body, a));
    }
    switch (r->op) {
      case ReduceOp::Add: {
        double s = 0;
        for (double v : vals) s += v;
        return s;
      }
      case ReduceOp::Max: {
        double m = -std::numeric_limits<double>::infinity();
        for (double v : vals) m = std::max(m, v);
        return m;
      }
      case ReduceOp::LogSumExp: {
        double m = -std::numeric_limits<double>::infinity();
        for (double v : vals) m = std::max(m, v);
        if (!std::isfinite(m)) return m;
        double s = 0;
        for (double v : vals) s += std::exp(v - m);
        return m + std::log(s);
      }
    }
  }
  throw std::runtime_error("ground_eval: unsupported term " + to_string(t));
}

}  // namespace oracle
