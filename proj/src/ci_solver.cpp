#include "corespec/ci_solver.hpp"

#include <lapacke.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

namespace corespec {

namespace {

// Phase of a_q^dagger a_p acting on d (p occupied, q empty after removal).
inline int single_phase(const Determinant& d, int p, int q) {
  auto r1 = apply_annihilate(d, p);
  auto r2 = apply_create(r1->det, q);
  return r1->sign * r2->sign;
}

}  // namespace

SectorHamiltonian build_hamiltonian(const SpinIntegrals& ints,
                                    std::shared_ptr<const CISpace> space, std::size_t dim_cap) {
  if (!space || space->size() == 0)
    throw std::invalid_argument("build_hamiltonian: empty determinant space");
  if (space->m() != ints.m)
    throw std::invalid_argument("build_hamiltonian: spin-orbital counts differ");
  if (space->size() > dim_cap)
    throw std::length_error("build_hamiltonian: dimension " + std::to_string(space->size()) +
                            " exceeds cap " + std::to_string(dim_cap));

  const int n = static_cast<int>(space->size());
  const int m = ints.m;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * 8);

  std::vector<int> occ, virt;
  for (int col = 0; col < n; ++col) {
    const Determinant& d = space->det(col);
    occ = d.occupied_list();
    virt.clear();
    for (int p = 0; p < m; ++p)
      if (!d.occupied(p)) virt.push_back(p);

    // diagonal
    double diag = ints.e_nuc;
    for (int p : occ) diag += ints.h(p, p);
    for (int p : occ)
      for (int q : occ) diag += 0.5 * ints.v_as(p, q, p, q);
    triplets.emplace_back(col, col, diag);

    // singles p -> q, spin conserving
    for (int p : occ)
      for (int q : virt) {
        if (p % 2 != q % 2) continue;
        Determinant d2{d.occ ^ (1ull << p) ^ (1ull << q), m};
        auto row = space->find(d2);
        if (!row) continue;  // projected out of a truncated space
        double val = ints.h(q, p);
        for (int r : occ)
          if (r != p) val += ints.v_as(q, r, p, r);
        if (val != 0.0) triplets.emplace_back(static_cast<int>(*row), col, single_phase(d, p, q) * val);
      }

    // doubles {p<q} -> {r<s}, spin-channel conserving
    for (std::size_t ip = 0; ip < occ.size(); ++ip)
      for (std::size_t iq = ip + 1; iq < occ.size(); ++iq) {
        const int p = occ[ip], q = occ[iq];
        for (std::size_t ir = 0; ir < virt.size(); ++ir)
          for (std::size_t is = ir + 1; is < virt.size(); ++is) {
            const int r = virt[ir], s = virt[is];
            if (p % 2 + q % 2 != r % 2 + s % 2) continue;
            Determinant d2{d.occ ^ (1ull << p) ^ (1ull << q) ^ (1ull << r) ^ (1ull << s), m};
            auto row = space->find(d2);
            if (!row) continue;
            const double val = ints.v_as(r, s, p, q);
            if (val == 0.0) continue;
            // phase of a_r^+ a_s^+ a_q a_p
            auto t1 = apply_annihilate(d, p);
            auto t2 = apply_annihilate(t1->det, q);
            auto t3 = apply_create(t2->det, s);
            auto t4 = apply_create(t3->det, r);
            const int phase = t1->sign * t2->sign * t3->sign * t4->sign;
            triplets.emplace_back(static_cast<int>(*row), col, phase * val);
          }
      }
  }

  SectorHamiltonian h;
  h.space = std::move(space);
  h.matrix.resize(n, n);
  h.matrix.setFromTriplets(triplets.begin(), triplets.end());
  h.e_nuc_included = true;
  return h;
}

EigenSolution solve_dense(const SectorHamiltonian& h, bool with_vectors, std::size_t dense_cap) {
  const int n = static_cast<int>(h.matrix.rows());
  if (static_cast<std::size_t>(n) > dense_cap)
    throw std::length_error("solve_dense: dimension " + std::to_string(n) + " exceeds cap " +
                            std::to_string(dense_cap) + "; use the Lanczos path");

  EigenSolution sol;
  sol.energies.resize(n);
  Eigen::MatrixXd a = Eigen::MatrixXd(h.matrix);
  if (with_vectors) {
    Eigen::MatrixXd z(n, n);
    std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(n));
    lapack_int found = 0;
    lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'A', 'U', n, a.data(), n, 0.0, 0.0,
                                     0, 0, 0.0, &found, sol.energies.data(), z.data(), n,
                                     isuppz.data());
    if (info != 0 || found != n)
      throw std::runtime_error("solve_dense: dsyevr failed with info " + std::to_string(info));
    sol.vectors = std::move(z);
  } else {
    lapack_int found = 0;
    Eigen::MatrixXd z(1, 1);
    std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(n));
    lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'N', 'A', 'U', n, a.data(), n, 0.0, 0.0,
                                     0, 0, 0.0, &found, sol.energies.data(), z.data(), 1,
                                     isuppz.data());
    if (info != 0 || found != n)
      throw std::runtime_error("solve_dense: dsyevr failed with info " + std::to_string(info));
  }
  return sol;
}

namespace {

struct LanczosBasis {
  std::vector<Eigen::VectorXd> q;
  LanczosTridiagonal tri;
};

// Shared recurrence with full (twice-repeated) reorthogonalization.
LanczosBasis run_lanczos(const SectorHamiltonian& h, Eigen::VectorXd start, int max_iter,
                         bool keep_basis) {
  LanczosBasis out;
  const double norm0 = start.norm();
  if (norm0 <= 0.0) throw std::invalid_argument("lanczos: zero start vector");
  out.tri.start_norm = norm0;

  const int n = static_cast<int>(h.matrix.rows());
  max_iter = std::min(max_iter, n);
  Eigen::VectorXd q = start / norm0;
  std::vector<Eigen::VectorXd> basis;
  basis.push_back(q);

  const double scale = h.matrix.coeffs().size() ? h.matrix.coeffs().cwiseAbs().maxCoeff() : 1.0;
  const double breakdown = 1e-14 * std::max(1.0, scale);

  for (int k = 0; k < max_iter; ++k) {
    Eigen::VectorXd w = h.matrix * basis[k];
    const double alpha = basis[k].dot(w);
    out.tri.alphas.push_back(alpha);
    out.tri.iterations = k + 1;
    if (k + 1 == max_iter) break;
    w -= alpha * basis[k];
    if (k > 0) w -= out.tri.betas[k - 1] * basis[k - 1];
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& v : basis) w -= v.dot(w) * v;
    const double beta = w.norm();
    if (beta < breakdown) break;  // exact invariant subspace
    out.tri.betas.push_back(beta);
    basis.push_back(w / beta);
  }
  if (keep_basis) out.q = std::move(basis);
  return out;
}

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tridiag_eig(const LanczosTridiagonal& tri) {
  const int k = tri.iterations;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    t(i, i) = tri.alphas[i];
    if (i + 1 < k) {
      t(i, i + 1) = tri.betas[i];
      t(i + 1, i) = tri.betas[i];
    }
  }
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(t);
}

}  // namespace

EigenSolution solve_ground_lanczos(const SectorHamiltonian& h, double tol, int max_iter,
                                   std::uint64_t seed) {
  const int n = static_cast<int>(h.matrix.rows());
  if (n == 1) {
    EigenSolution sol;
    sol.energies = Eigen::VectorXd::Constant(1, h.matrix.coeff(0, 0));
    sol.vectors = Eigen::MatrixXd::Ones(1, 1);
    return sol;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd start(n);
  for (int i = 0; i < n; ++i) start(i) = gauss(rng);

  // Grow the Krylov space in blocks until the ground Ritz value settles.
  double prev = std::numeric_limits<double>::infinity();
  int k = std::min(std::max(20, 2), n);
  while (true) {
    auto lan = run_lanczos(h, start, k, true);
    auto eig = tridiag_eig(lan.tri);
    const double e0 = eig.eigenvalues()(0);
    const bool exhausted = lan.tri.iterations < k || k >= n || k >= max_iter;
    if (std::abs(e0 - prev) < tol * std::max(1.0, std::abs(e0)) || exhausted) {
      if (!exhausted && std::abs(e0 - prev) >= tol * std::max(1.0, std::abs(e0)))
        throw ConvergenceError("solve_ground_lanczos: no convergence in " +
                                   std::to_string(max_iter) + " iterations",
                               e0);
      EigenSolution sol;
      sol.energies = Eigen::VectorXd::Constant(1, e0);
      Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < lan.tri.iterations; ++i) v += eig.eigenvectors()(i, 0) * lan.q[i];
      v.normalize();
      Eigen::MatrixXd vec(n, 1);
      vec.col(0) = v;
      sol.vectors = std::move(vec);
      return sol;
    }
    prev = e0;
    k = std::min({2 * k, n, max_iter});
  }
}

LanczosTridiagonal lanczos_from_vector(const SectorHamiltonian& h, const Eigen::VectorXd& start,
                                       int iterations) {
  if (start.size() != h.matrix.rows())
    throw std::invalid_argument("lanczos_from_vector: start vector length mismatch");
  return run_lanczos(h, start, iterations, false).tri;
}

RitzSpectrum ritz_spectrum(const LanczosTridiagonal& tri) {
  auto eig = tridiag_eig(tri);
  RitzSpectrum out;
  out.values = eig.eigenvalues();
  out.weights = tri.start_norm * tri.start_norm *
                eig.eigenvectors().row(0).transpose().cwiseAbs2();
  return out;
}

double diagonal_element(const SectorHamiltonian& h, const Determinant& d) {
  auto idx = h.space->find(d);
  if (!idx) throw std::invalid_argument("determinant not in the Hamiltonian's space");
  return h.matrix.coeff(static_cast<int>(*idx), static_cast<int>(*idx));
}

double correlation_energy(const SectorHamiltonian& h, const Determinant& reference) {
  const double e_ref = diagonal_element(h, reference);
  double e0;
  if (h.matrix.rows() <= 64) {
    e0 = solve_dense(h, false).energies(0);
  } else {
    e0 = solve_ground_lanczos(h, 1e-12, 600).energies(0);
  }
  return e0 - e_ref;
}

}  // namespace corespec
