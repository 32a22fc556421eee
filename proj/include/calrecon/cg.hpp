#pragma once

#include "errors.hpp"
#include "forward_model.hpp"
#include "image.hpp"

#include <cmath>
#include <concepts>
#include <vector>

namespace calrecon {

struct CgConfig
{
  std::size_t max_iters = 20;
  double tol = 1e-6;

  void validate() const
  {
    if (max_iters < 1) { throw InvalidArgument("CgConfig: max_iters must be >= 1"); }
    if (!(tol > 0.0)) { throw InvalidArgument("CgConfig: tol must be > 0"); }
  }
};

struct CgResult
{
  ComplexImage solution;
  double residual = 0.0;          // final ||b - Op x|| / ||b||
  std::size_t iters = 0;
  std::vector<double> residuals;  // relative residual after each iteration, index 0 = initial
  bool converged = false;
};

template <typename Op>
concept LinearImageOperator = requires(Op const &op, ComplexImage const &x) {
  { op(x) } -> std::convertible_to<ComplexImage>;
};

/// Conjugate gradient for Hermitian positive definite `op`. Stops when the
/// relative residual drops to cfg.tol or after cfg.max_iters iterations.
template <LinearImageOperator Op>
CgResult cg_solve(Op const &op, ComplexImage const &rhs, ComplexImage x0, CgConfig const &cfg)
{
  cfg.validate();
  if (!x0.same_shape(rhs)) { throw InvalidArgument("cg_solve: x0 and rhs shapes differ"); }
  CgResult res;
  double const bnorm = norm2(rhs);
  if (bnorm == 0.0) {
    res.solution = ComplexImage(rhs.height(), rhs.width());
    res.residuals = {0.0};
    res.converged = true;
    return res;
  }

  ComplexImage x = std::move(x0);
  ComplexImage r = rhs - op(x);
  ComplexImage p = r;
  double rr = norm2_squared(r.span());
  res.residuals.push_back(std::sqrt(rr) / bnorm);

  std::size_t it = 0;
  while (res.residuals.back() > cfg.tol && it < cfg.max_iters) {
    ComplexImage const q = op(p);
    double const pq = dot(p, q).real();
    if (!(pq > 0.0)) { throw NumericError("cg_solve: breakdown, operator is not positive definite"); }
    double const alpha = rr / pq;
    x.axpy(alpha, p);
    r.axpy(-alpha, q);
    double const rr_new = norm2_squared(r.span());
    ++it;
    res.residuals.push_back(std::sqrt(rr_new) / bnorm);
    double const beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < p.size(); ++i) { p[i] = r[i] + beta * p[i]; }
  }
  res.iters = it;
  res.residual = res.residuals.back();
  res.converged = res.residual <= cfg.tol;
  res.solution = std::move(x);
  return res;
}

/// Normal-equation operator of the data-fidelity proximal step:
/// x -> (gamma A^H A + I) x.
struct ProximalNormalOperator
{
  ForwardOperator const &op;
  double gamma;

  ComplexImage operator()(ComplexImage const &x) const
  {
    ComplexImage out = apply_normal(x, op);
    for (std::size_t p = 0; p < out.size(); ++p) { out[p] = gamma * out[p] + x[p]; }
    return out;
  }
};

struct P3Result
{
  ComplexImage image;
  double residual = 0.0;
  std::size_t iters = 0;
};

/// argmin_x gamma/2 ||y - A x||^2 + 1/2 ||x_dot - x||^2, i.e. the solution of
/// (gamma A^H A + I) x = gamma A^H y + x_dot, warm-started at x_dot. A
/// non-converged solve still returns the last iterate; its residual is
/// reported.
inline P3Result solve_p3(ComplexImage const &x_dot, MultiCoilKSpace const &y, ForwardOperator const &op, double gamma,
                         CgConfig const &cfg)
{
  if (!(gamma >= 0.0)) { throw InvalidArgument("solve_p3: gamma must be >= 0"); }
  if (gamma == 0.0) { return {x_dot, 0.0, 0}; }
  ComplexImage rhs = apply_adjoint(y, op);
  for (std::size_t p = 0; p < rhs.size(); ++p) { rhs[p] = gamma * rhs[p] + x_dot[p]; }
  auto res = cg_solve(ProximalNormalOperator{op, gamma}, rhs, x_dot, cfg);
  return {std::move(res.solution), res.residual, res.iters};
}

} // namespace calrecon
