#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace isnpg {

struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<int> cols;
  std::vector<double> vals;

  std::size_t nnz() const { return vals.size(); }
};

CsrMatrix transpose(const CsrMatrix& a);

// y = a * x.
void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y);
void spmv_serial(const CsrMatrix& a, std::span<const double> x, std::span<double> y);

// automatic: direct up to direct_limit states, krylov above.
// iterative: OpenMP fixed-point sweeps; serial: the same sweeps on one thread.
enum class SolveMethod { automatic, direct, krylov, iterative, serial };

struct SolveOptions {
  SolveMethod method = SolveMethod::automatic;
  double tolerance = 1e-10;       // max-norm residual
  std::size_t direct_limit = 1000;
  std::size_t max_iterations = 0;  // 0 derives a bound from beta
};

struct SolveResult {
  std::vector<double> x;
  double residual = 0.0;
  std::size_t iterations = 0;
  bool direct = false;
};

// Solves (I - beta P) x = rhs, or (I - beta P^T) x = rhs when transposed.
// Throws SolverError when the residual target is missed.
SolveResult solve_discounted(const CsrMatrix& p, double beta, std::span<const double> rhs,
                             bool transposed, const SolveOptions& opts = {});

// max |x - beta P x - rhs| (or with P^T).
double discounted_residual(const CsrMatrix& p, double beta, std::span<const double> x,
                           std::span<const double> rhs, bool transposed);

}  // namespace isnpg
