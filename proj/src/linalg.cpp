#include "isnpg/linalg.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCore>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "isnpg/errors.hpp"

namespace isnpg {

CsrMatrix transpose(const CsrMatrix& a) {
  CsrMatrix t;
  t.n = a.n;
  std::vector<std::size_t> count(a.n + 1, 0);
  for (int c : a.cols) ++count[c + 1];
  for (std::size_t k = 0; k < a.n; ++k) count[k + 1] += count[k];
  t.offsets = count;
  t.cols.resize(a.nnz());
  t.vals.resize(a.nnz());
  std::vector<std::size_t> fill(count.begin(), count.end() - 1);
  for (std::size_t r = 0; r < a.n; ++r) {
    for (std::size_t k = a.offsets[r]; k < a.offsets[r + 1]; ++k) {
      std::size_t pos = fill[a.cols[k]]++;
      t.cols[pos] = static_cast<int>(r);
      t.vals[pos] = a.vals[k];
    }
  }
  return t;
}

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(a.n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t k = a.offsets[r]; k < a.offsets[r + 1]; ++k) s += a.vals[k] * x[a.cols[k]];
    y[r] = s;
  }
}

void spmv_serial(const CsrMatrix& a, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < a.n; ++r) {
    double s = 0.0;
    for (std::size_t k = a.offsets[r]; k < a.offsets[r + 1]; ++k) s += a.vals[k] * x[a.cols[k]];
    y[r] = s;
  }
}

namespace {

double residual_with(const CsrMatrix& op, double beta, std::span<const double> x,
                     std::span<const double> rhs, std::vector<double>& work) {
  work.resize(op.n);
  spmv(op, x, work);
  double worst = 0.0;
  for (std::size_t r = 0; r < op.n; ++r) worst = std::max(worst, std::abs(x[r] - beta * work[r] - rhs[r]));
  return worst;
}

std::size_t iteration_bound(double beta, double tol, std::span<const double> rhs) {
  double scale = 1.0;
  for (double v : rhs) scale = std::max(scale, std::abs(v));
  // beta^k * scale / (1 - beta) <= tol, with headroom for rounding.
  double k = std::log(tol * (1.0 - beta) / (scale / (1.0 - beta))) / std::log(beta);
  return static_cast<std::size_t>(std::max(100.0, 2.0 * k + 100.0));
}

SolveResult fixed_point(const CsrMatrix& op, double beta, std::span<const double> rhs,
                        std::span<const double> start, const SolveOptions& opts, bool serial) {
  SolveResult out;
  out.x.assign(start.begin(), start.end());
  std::vector<double> next(op.n);
  const std::size_t cap = opts.max_iterations ? opts.max_iterations
                                              : iteration_bound(beta, opts.tolerance, rhs);
  for (std::size_t it = 0; it < cap; ++it) {
    if (serial) {
      spmv_serial(op, out.x, next);
    } else {
      spmv(op, out.x, next);
    }
    double change = 0.0;
    for (std::size_t r = 0; r < op.n; ++r) {
      double v = rhs[r] + beta * next[r];
      change = std::max(change, std::abs(v - out.x[r]));
      out.x[r] = v;
    }
    out.iterations = it + 1;
    // change bounds the residual of the previous iterate; the new one is
    // at most beta times that.
    if (beta * change <= opts.tolerance) {
      out.residual = beta * change;
      return out;
    }
  }
  std::vector<double> work;
  out.residual = residual_with(op, beta, out.x, rhs, work);
  if (out.residual > opts.tolerance) {
    throw SolverError("fixed-point iteration stopped after " + std::to_string(cap) +
                          " sweeps above the residual target",
                      out.residual);
  }
  return out;
}

Eigen::SparseMatrix<double> system_matrix(const CsrMatrix& p, double beta, bool transposed) {
  const auto n = static_cast<Eigen::Index>(p.n);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(p.nnz() + p.n);
  for (std::size_t r = 0; r < p.n; ++r) {
    trip.emplace_back(r, r, 1.0);
    for (std::size_t k = p.offsets[r]; k < p.offsets[r + 1]; ++k) {
      if (transposed) {
        trip.emplace_back(p.cols[k], r, -beta * p.vals[k]);
      } else {
        trip.emplace_back(r, p.cols[k], -beta * p.vals[k]);
      }
    }
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  return a;
}

SolveResult direct_solve(const CsrMatrix& p, double beta, std::span<const double> rhs,
                         bool transposed, const SolveOptions& opts) {
  const auto n = static_cast<Eigen::Index>(p.n);
  Eigen::SparseMatrix<double> a = system_matrix(p, beta, transposed);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw SolverError("sparse LU factorization failed", INFINITY);
  Eigen::Map<const Eigen::VectorXd> b(rhs.data(), n);
  Eigen::VectorXd x = lu.solve(b);
  SolveResult out;
  out.direct = true;
  // Two rounds of refinement are enough at these condition numbers.
  for (int round = 0; round < 3; ++round) {
    Eigen::VectorXd r = b - a * x;
    out.residual = r.lpNorm<Eigen::Infinity>();
    if (out.residual <= opts.tolerance * 1e-2 || round == 2) break;
    x += lu.solve(r);
  }
  out.x.assign(x.data(), x.data() + n);
  if (!(out.residual <= opts.tolerance)) throw SolverError("direct solve missed the residual target", out.residual);
  return out;
}

// BiCGSTAB with a diagonal preconditioner; restarts from the last iterate
// until the max-norm residual target is met.
SolveResult krylov_solve(const CsrMatrix& p, double beta, std::span<const double> rhs, bool transposed,
                         const SolveOptions& opts) {
  const auto n = static_cast<Eigen::Index>(p.n);
  Eigen::SparseMatrix<double, Eigen::RowMajor> a = system_matrix(p, beta, transposed);
  Eigen::Map<const Eigen::VectorXd> b(rhs.data(), n);
  Eigen::BiCGSTAB<Eigen::SparseMatrix<double, Eigen::RowMajor>> solver;
  solver.setTolerance(1e-14);
  solver.compute(a);
  Eigen::VectorXd x = b;
  SolveResult out;
  for (int round = 0; round < 4; ++round) {
    x = solver.solveWithGuess(b, x);
    out.iterations += static_cast<std::size_t>(solver.iterations());
    out.residual = (b - a * x).lpNorm<Eigen::Infinity>();
    if (out.residual <= opts.tolerance * 1e-1) break;
  }
  out.x.assign(x.data(), x.data() + n);
  if (out.residual <= opts.tolerance && std::isfinite(out.residual)) return out;
  // Stagnation: finish with the contraction from the best iterate.
  std::vector<double> start = out.x;
  if (!std::all_of(start.begin(), start.end(), [](double v) { return std::isfinite(v); })) {
    start.assign(rhs.begin(), rhs.end());
  }
  if (transposed) return fixed_point(transpose(p), beta, rhs, start, opts, false);
  return fixed_point(p, beta, rhs, start, opts, false);
}

}  // namespace

double discounted_residual(const CsrMatrix& p, double beta, std::span<const double> x,
                           std::span<const double> rhs, bool transposed) {
  std::vector<double> work;
  if (transposed) return residual_with(transpose(p), beta, x, rhs, work);
  return residual_with(p, beta, x, rhs, work);
}

SolveResult solve_discounted(const CsrMatrix& p, double beta, std::span<const double> rhs,
                             bool transposed, const SolveOptions& opts) {
  if (!(beta > 0.0 && beta < 1.0)) throw ContractError("solve_discounted: beta must lie in (0,1)");
  if (rhs.size() != p.n) throw ContractError("solve_discounted: rhs size mismatch");
  SolveMethod method = opts.method;
  if (method == SolveMethod::automatic) {
    method = p.n <= opts.direct_limit ? SolveMethod::direct : SolveMethod::krylov;
  }
  if (method == SolveMethod::direct) return direct_solve(p, beta, rhs, transposed, opts);
  if (method == SolveMethod::krylov) return krylov_solve(p, beta, rhs, transposed, opts);
  std::vector<double> start(rhs.begin(), rhs.end());
  if (transposed) {
    return fixed_point(transpose(p), beta, rhs, start, opts, method == SolveMethod::serial);
  }
  return fixed_point(p, beta, rhs, start, opts, method == SolveMethod::serial);
}

}  // namespace isnpg
