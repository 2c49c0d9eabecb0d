#include "corespec/rt_eom_cc.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <stdexcept>

#include "corespec/constants.hpp"

namespace corespec {

namespace {

using cd = std::complex<double>;
constexpr cd iu{0.0, 1.0};

// tau_ij^ab = t2 + t1 t1 (antisymmetrized); half scales the t1 t1 part.
Eigen::MatrixXcd tau_tensor(const CCState& s, const CCSystem& sys, double t1_factor) {
  Eigen::MatrixXcd tau = s.t2;
  for (int i = 0; i < sys.no; ++i)
    for (int j = 0; j < sys.no; ++j)
      for (int a = 0; a < sys.nv; ++a)
        for (int b = 0; b < sys.nv; ++b)
          tau(sys.oo(i, j), sys.vv(a, b)) +=
              t1_factor * (s.t1(i, a) * s.t1(j, b) - s.t1(i, b) * s.t1(j, a));
  return tau;
}

}  // namespace

Eigen::MatrixXd fock_of_occupation(const SpinIntegrals& ints, std::uint64_t occ_bits) {
  Eigen::MatrixXd f = ints.h;
  for (int p = 0; p < ints.m; ++p)
    for (int q = 0; q < ints.m; ++q) {
      double acc = 0.0;
      for (int i = 0; i < ints.m; ++i)
        if (occ_bits >> i & 1ull) acc += ints.v_as(p, i, q, i);
      f(p, q) += acc;
    }
  return f;
}

CCSystem make_cc_system(const SpinIntegrals& ints, std::uint64_t occ_bits) {
  CCSystem sys;
  for (int p = 0; p < ints.m; ++p)
    (occ_bits >> p & 1ull ? sys.occ : sys.virt).push_back(p);
  sys.no = static_cast<int>(sys.occ.size());
  sys.nv = static_cast<int>(sys.virt.size());
  sys.f = fock_of_occupation(ints, occ_bits);

  const int no = sys.no, nv = sys.nv;
  sys.f_oo.resize(no, no);
  sys.f_ov.resize(no, nv);
  sys.f_vv.resize(nv, nv);
  for (int m = 0; m < no; ++m) {
    for (int n = 0; n < no; ++n) sys.f_oo(m, n) = sys.f(sys.occ[m], sys.occ[n]);
    for (int e = 0; e < nv; ++e) sys.f_ov(m, e) = sys.f(sys.occ[m], sys.virt[e]);
  }
  for (int a = 0; a < nv; ++a)
    for (int b = 0; b < nv; ++b) sys.f_vv(a, b) = sys.f(sys.virt[a], sys.virt[b]);

  auto v = [&](int p, int q, int r, int s) { return cd(ints.v_as(p, q, r, s), 0.0); };
  const auto& O = sys.occ;
  const auto& V = sys.virt;

  sys.v_oooo.resize(no * no, no * no);
  sys.v_ooov.resize(no * no, no * nv);
  sys.v_oovv.resize(no * no, nv * nv);
  for (int m = 0; m < no; ++m)
    for (int n = 0; n < no; ++n) {
      const int mn = sys.oo(m, n);
      for (int i = 0; i < no; ++i) {
        for (int j = 0; j < no; ++j) sys.v_oooo(mn, sys.oo(i, j)) = v(O[m], O[n], O[i], O[j]);
        for (int e = 0; e < nv; ++e) sys.v_ooov(mn, sys.ov(i, e)) = v(O[m], O[n], O[i], V[e]);
      }
      for (int e = 0; e < nv; ++e)
        for (int ff = 0; ff < nv; ++ff) sys.v_oovv(mn, sys.vv(e, ff)) = v(O[m], O[n], V[e], V[ff]);
    }

  sys.v_oovv_me_nf.resize(no * nv, no * nv);
  for (int m = 0; m < no; ++m)
    for (int e = 0; e < nv; ++e)
      for (int n = 0; n < no; ++n)
        for (int ff = 0; ff < nv; ++ff)
          sys.v_oovv_me_nf(sys.ov(m, e), sys.ov(n, ff)) = sys.v_oovv(sys.oo(m, n), sys.vv(e, ff));

  sys.v_ovvo.resize(no * nv, nv * no);
  sys.v_ovvv.resize(no * nv, nv * nv);
  sys.v_ovoo.resize(no * nv, no * no);
  for (int m = 0; m < no; ++m)
    for (int b = 0; b < nv; ++b) {
      const int mb = sys.ov(m, b);
      for (int e = 0; e < nv; ++e) {
        for (int j = 0; j < no; ++j) sys.v_ovvo(mb, e * no + j) = v(O[m], V[b], V[e], O[j]);
        for (int ff = 0; ff < nv; ++ff) sys.v_ovvv(mb, sys.vv(e, ff)) = v(O[m], V[b], V[e], V[ff]);
      }
      for (int i = 0; i < no; ++i)
        for (int j = 0; j < no; ++j) sys.v_ovoo(mb, sys.oo(i, j)) = v(O[m], V[b], O[i], O[j]);
    }

  sys.v_vvvv.resize(nv * nv, nv * nv);
  sys.v_vvvo.resize(nv * nv, nv * no);
  for (int a = 0; a < nv; ++a)
    for (int b = 0; b < nv; ++b) {
      const int ab = sys.vv(a, b);
      for (int e = 0; e < nv; ++e) {
        for (int ff = 0; ff < nv; ++ff) sys.v_vvvv(ab, sys.vv(e, ff)) = v(V[a], V[b], V[e], V[ff]);
        for (int j = 0; j < no; ++j) sys.v_vvvo(ab, e * no + j) = v(V[a], V[b], V[e], O[j]);
      }
    }
  return sys;
}

CCState zero_state(const CCSystem& sys) {
  CCState s;
  s.t1 = Eigen::MatrixXcd::Zero(sys.no, sys.nv);
  s.t2 = Eigen::MatrixXcd::Zero(sys.no * sys.no, sys.nv * sys.nv);
  return s;
}

void ccsd_residuals(const CCState& state, const CCSystem& sys, Eigen::MatrixXcd& r1,
                    Eigen::MatrixXcd& r2) {
  const int no = sys.no, nv = sys.nv;
  const auto& t1 = state.t1;
  const auto& t2 = state.t2;
  if (t1.rows() != no || t1.cols() != nv || t2.rows() != no * no || t2.cols() != nv * nv)
    throw std::invalid_argument("ccsd_residuals: amplitude shapes do not match the reference");

  const Eigen::MatrixXcd tau = tau_tensor(state, sys, 1.0);
  const Eigen::MatrixXcd taut = tau_tensor(state, sys, 0.5);

  // two-index intermediates (full Fock rows/columns, non-canonical ready)
  Eigen::MatrixXcd F_vv = sys.f_vv;
  for (int a = 0; a < nv; ++a)
    for (int e = 0; e < nv; ++e) {
      cd acc = 0.0;
      for (int m = 0; m < no; ++m) acc -= 0.5 * sys.f_ov(m, e) * t1(m, a);
      for (int m = 0; m < no; ++m)
        for (int ff = 0; ff < nv; ++ff) acc += t1(m, ff) * sys.v_ovvv(sys.ov(m, a), sys.vv(ff, e));
      for (int m = 0; m < no; ++m)
        for (int n = 0; n < no; ++n)
          for (int ff = 0; ff < nv; ++ff)
            acc -= 0.5 * taut(sys.oo(m, n), sys.vv(a, ff)) * sys.v_oovv(sys.oo(m, n), sys.vv(e, ff));
      F_vv(a, e) += acc;
    }

  Eigen::MatrixXcd F_oo = sys.f_oo;
  for (int m = 0; m < no; ++m)
    for (int i = 0; i < no; ++i) {
      cd acc = 0.0;
      for (int e = 0; e < nv; ++e) acc += 0.5 * t1(i, e) * sys.f_ov(m, e);
      for (int n = 0; n < no; ++n)
        for (int e = 0; e < nv; ++e) acc += t1(n, e) * sys.v_ooov(sys.oo(m, n), sys.ov(i, e));
      for (int n = 0; n < no; ++n)
        for (int e = 0; e < nv; ++e)
          for (int ff = 0; ff < nv; ++ff)
            acc += 0.5 * taut(sys.oo(i, n), sys.vv(e, ff)) * sys.v_oovv(sys.oo(m, n), sys.vv(e, ff));
      F_oo(m, i) += acc;
    }

  Eigen::MatrixXcd F_ov = sys.f_ov;
  for (int m = 0; m < no; ++m)
    for (int e = 0; e < nv; ++e) {
      cd acc = 0.0;
      for (int n = 0; n < no; ++n)
        for (int ff = 0; ff < nv; ++ff) acc += t1(n, ff) * sys.v_oovv(sys.oo(m, n), sys.vv(e, ff));
      F_ov(m, e) += acc;
    }

  // W_mnij
  Eigen::MatrixXcd W_oooo = sys.v_oooo + 0.25 * sys.v_oovv * tau.transpose();
  for (int m = 0; m < no; ++m)
    for (int n = 0; n < no; ++n) {
      const int mn = sys.oo(m, n);
      for (int i = 0; i < no; ++i)
        for (int j = 0; j < no; ++j) {
          cd acc = 0.0;
          for (int e = 0; e < nv; ++e)
            acc += t1(j, e) * sys.v_ooov(mn, sys.ov(i, e)) -
                   t1(i, e) * sys.v_ooov(mn, sys.ov(j, e));
          W_oooo(mn, sys.oo(i, j)) += acc;
        }
    }

  // W_abef
  Eigen::MatrixXcd W_vvvv = sys.v_vvvv;
  {
    Eigen::MatrixXcd tau_ab_mn(nv * nv, no * no);
    for (int m = 0; m < no; ++m)
      for (int n = 0; n < no; ++n)
        for (int a = 0; a < nv; ++a)
          for (int b = 0; b < nv; ++b)
            tau_ab_mn(sys.vv(a, b), sys.oo(m, n)) = tau(sys.oo(m, n), sys.vv(a, b));
    W_vvvv += 0.25 * tau_ab_mn * sys.v_oovv;
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b) {
        const int ab = sys.vv(a, b);
        for (int e = 0; e < nv; ++e)
          for (int ff = 0; ff < nv; ++ff) {
            cd acc = 0.0;
            for (int m = 0; m < no; ++m)
              acc += -t1(m, b) * sys.v_ovvv(sys.ov(m, a), sys.vv(e, ff)) +
                     t1(m, a) * sys.v_ovvv(sys.ov(m, b), sys.vv(e, ff));
            W_vvvv(ab, sys.vv(e, ff)) += acc;
          }
      }
  }

  // W_mbej, stored [mb, ej]
  Eigen::MatrixXcd W_ovvo = sys.v_ovvo;
  for (int m = 0; m < no; ++m)
    for (int b = 0; b < nv; ++b) {
      const int mb = sys.ov(m, b);
      for (int e = 0; e < nv; ++e)
        for (int j = 0; j < no; ++j) {
          cd acc = 0.0;
          for (int ff = 0; ff < nv; ++ff) acc += t1(j, ff) * sys.v_ovvv(mb, sys.vv(e, ff));
          for (int n = 0; n < no; ++n)
            acc += t1(n, b) * sys.v_ooov(sys.oo(m, n), sys.ov(j, e));  // -<mn||ej> = +<mn||je>
          W_ovvo(mb, e * no + j) += acc;
        }
    }
  {
    // -(1/2 t_jn^fb + t_j^f t_n^b) <mn||ef>  via [(me),(nf)] x [(nf),(jb)]
    Eigen::MatrixXcd B(no * nv, no * nv);
    for (int n = 0; n < no; ++n)
      for (int ff = 0; ff < nv; ++ff)
        for (int j = 0; j < no; ++j)
          for (int b = 0; b < nv; ++b)
            B(sys.ov(n, ff), sys.ov(j, b)) =
                0.5 * t2(sys.oo(j, n), sys.vv(ff, b)) + t1(j, ff) * t1(n, b);
    Eigen::MatrixXcd C = sys.v_oovv_me_nf * B;  // [(me),(jb)]
    for (int m = 0; m < no; ++m)
      for (int b = 0; b < nv; ++b)
        for (int e = 0; e < nv; ++e)
          for (int j = 0; j < no; ++j)
            W_ovvo(sys.ov(m, b), e * no + j) -= C(sys.ov(m, e), sys.ov(j, b));
  }

  // T1 residual
  r1 = sys.f_ov;
  for (int i = 0; i < no; ++i)
    for (int a = 0; a < nv; ++a) {
      cd acc = 0.0;
      for (int e = 0; e < nv; ++e) acc += t1(i, e) * F_vv(a, e);
      for (int m = 0; m < no; ++m) acc -= t1(m, a) * F_oo(m, i);
      for (int m = 0; m < no; ++m)
        for (int e = 0; e < nv; ++e) acc += t2(sys.oo(i, m), sys.vv(a, e)) * F_ov(m, e);
      for (int n = 0; n < no; ++n)
        for (int ff = 0; ff < nv; ++ff)
          acc += t1(n, ff) * sys.v_ovvo(sys.ov(n, a), ff * no + i);  // -<na||if>
      for (int m = 0; m < no; ++m)
        for (int e = 0; e < nv; ++e)
          for (int ff = 0; ff < nv; ++ff)
            acc -= 0.5 * t2(sys.oo(i, m), sys.vv(e, ff)) * sys.v_ovvv(sys.ov(m, a), sys.vv(e, ff));
      for (int m = 0; m < no; ++m)
        for (int n = 0; n < no; ++n)
          for (int e = 0; e < nv; ++e)
            acc -= 0.5 * t2(sys.oo(m, n), sys.vv(a, e)) * sys.v_ooov(sys.oo(m, n), sys.ov(i, e));
      r1(i, a) += acc;
    }

  // T2 residual
  r2 = sys.v_oovv;
  r2.noalias() += 0.5 * W_oooo.transpose() * tau;          // hole ladder
  r2.noalias() += 0.5 * tau * W_vvvv.transpose();          // particle ladder

  Eigen::MatrixXcd G_vv = F_vv;  // F_be - 1/2 sum_m t_m^b F_me
  for (int b = 0; b < nv; ++b)
    for (int e = 0; e < nv; ++e) {
      cd acc = 0.0;
      for (int m = 0; m < no; ++m) acc += t1(m, b) * F_ov(m, e);
      G_vv(b, e) -= 0.5 * acc;
    }
  Eigen::MatrixXcd G_oo = F_oo;  // F_mj + 1/2 sum_e t_j^e F_me
  for (int m = 0; m < no; ++m)
    for (int j = 0; j < no; ++j) {
      cd acc = 0.0;
      for (int e = 0; e < nv; ++e) acc += t1(j, e) * F_ov(m, e);
      G_oo(m, j) += 0.5 * acc;
    }

  // ring term X[(ia),(jb)] = sum_me t_im^ae W_mbej
  Eigen::MatrixXcd T_ia_me(no * nv, no * nv);
  for (int i = 0; i < no; ++i)
    for (int a = 0; a < nv; ++a)
      for (int m = 0; m < no; ++m)
        for (int e = 0; e < nv; ++e)
          T_ia_me(sys.ov(i, a), sys.ov(m, e)) = t2(sys.oo(i, m), sys.vv(a, e));
  Eigen::MatrixXcd W_me_jb(no * nv, no * nv);
  for (int m = 0; m < no; ++m)
    for (int e = 0; e < nv; ++e)
      for (int j = 0; j < no; ++j)
        for (int b = 0; b < nv; ++b)
          W_me_jb(sys.ov(m, e), sys.ov(j, b)) = W_ovvo(sys.ov(m, b), e * no + j);
  Eigen::MatrixXcd X = T_ia_me * W_me_jb;  // [(ia),(jb)]

  // Y[(ia),(jb)] = sum_e t_i^e [ sum_m t_m^a <mb||ej> ]
  Eigen::MatrixXcd Z(nv * nv, nv * no);  // [(ab),(ej)]
  for (int a = 0; a < nv; ++a)
    for (int b = 0; b < nv; ++b)
      for (int e = 0; e < nv; ++e)
        for (int j = 0; j < no; ++j) {
          cd acc = 0.0;
          for (int m = 0; m < no; ++m) acc += t1(m, a) * sys.v_ovvo(sys.ov(m, b), e * no + j);
          Z(sys.vv(a, b), e * no + j) = acc;
        }
  Eigen::MatrixXcd Y(no * nv, no * nv);
  for (int i = 0; i < no; ++i)
    for (int a = 0; a < nv; ++a)
      for (int j = 0; j < no; ++j)
        for (int b = 0; b < nv; ++b) {
          cd acc = 0.0;
          for (int e = 0; e < nv; ++e) acc += t1(i, e) * Z(sys.vv(a, b), e * no + j);
          Y(sys.ov(i, a), sys.ov(j, b)) = acc;
        }
  X -= Y;

  for (int i = 0; i < no; ++i)
    for (int j = 0; j < no; ++j)
      for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b) {
          cd acc = X(sys.ov(i, a), sys.ov(j, b)) - X(sys.ov(j, a), sys.ov(i, b)) -
                   X(sys.ov(i, b), sys.ov(j, a)) + X(sys.ov(j, b), sys.ov(i, a));
          // P(ab) t2 G_vv  and  -P(ij) t2 G_oo
          for (int e = 0; e < nv; ++e)
            acc += t2(sys.oo(i, j), sys.vv(a, e)) * G_vv(b, e) -
                   t2(sys.oo(i, j), sys.vv(b, e)) * G_vv(a, e);
          for (int m = 0; m < no; ++m)
            acc -= t2(sys.oo(i, m), sys.vv(a, b)) * G_oo(m, j) -
                   t2(sys.oo(j, m), sys.vv(a, b)) * G_oo(m, i);
          // P(ij) t_i^e <ab||ej>
          for (int e = 0; e < nv; ++e)
            acc += t1(i, e) * sys.v_vvvo(sys.vv(a, b), e * no + j) -
                   t1(j, e) * sys.v_vvvo(sys.vv(a, b), e * no + i);
          // -P(ab) t_m^a <mb||ij>
          for (int m = 0; m < no; ++m)
            acc -= t1(m, a) * sys.v_ovoo(sys.ov(m, b), sys.oo(i, j)) -
                   t1(m, b) * sys.v_ovoo(sys.ov(m, a), sys.oo(i, j));
          r2(sys.oo(i, j), sys.vv(a, b)) += acc;
        }
}

std::complex<double> cumulant_rhs(const CCState& state, const CCSystem& sys) {
  cd e = 0.0;
  for (int i = 0; i < sys.no; ++i)
    for (int a = 0; a < sys.nv; ++a) e += sys.f_ov(i, a) * state.t1(i, a);
  for (int i = 0; i < sys.no; ++i)
    for (int j = 0; j < sys.no; ++j)
      for (int a = 0; a < sys.nv; ++a)
        for (int b = 0; b < sys.nv; ++b) {
          const cd v = sys.v_oovv(sys.oo(i, j), sys.vv(a, b));
          e += 0.5 * v * state.t1(j, b) * state.t1(i, a);
          e += 0.25 * v * state.t2(sys.oo(i, j), sys.vv(a, b));
        }
  return iu * e;
}

CCReference init_reference(std::shared_ptr<const SpinIntegrals> ints, int c, double e_corr_value) {
  if (c < 0 || c >= ints->m) throw std::invalid_argument("init_reference: core index out of range");
  if (!(ints->reference_occupation >> c & 1ull))
    throw std::domain_error("init_reference: core spin-orbital is unoccupied in the reference");
  CCReference ref;
  ref.core = c;
  ref.phi = Determinant{ints->reference_occupation & ~(1ull << c), ints->m};
  ref.eps_c = ints->eps(c);
  ref.e_corr = e_corr_value;
  ref.sys = make_cc_system(*ints, ref.phi.occ);
  ref.ints = std::move(ints);
  return ref;
}

CCTrajectory propagate(const CCReference& ref, const PropagateOptions& opts) {
  if (!opts.checkpoint_path.empty() && std::filesystem::exists(opts.checkpoint_path)) {
    auto [state, traj] = load_checkpoint(opts.checkpoint_path);
    return propagate_from(ref, opts, std::move(state), std::move(traj));
  }
  return propagate_from(ref, opts, zero_state(ref.sys));
}

namespace {

void antisymmetrize(Eigen::MatrixXcd& t2, const CCSystem& sys) {
  for (int i = 0; i < sys.no; ++i) t2.row(sys.oo(i, i)).setZero();
  for (int a = 0; a < sys.nv; ++a) t2.col(sys.vv(a, a)).setZero();
  for (int i = 0; i < sys.no; ++i)
    for (int j = 0; j < i; ++j)
      for (int a = 0; a < sys.nv; ++a)
        for (int b = 0; b < a; ++b) {
          const cd val = 0.25 * (t2(sys.oo(i, j), sys.vv(a, b)) - t2(sys.oo(j, i), sys.vv(a, b)) -
                                 t2(sys.oo(i, j), sys.vv(b, a)) + t2(sys.oo(j, i), sys.vv(b, a)));
          t2(sys.oo(i, j), sys.vv(a, b)) = val;
          t2(sys.oo(j, i), sys.vv(a, b)) = -val;
          t2(sys.oo(i, j), sys.vv(b, a)) = -val;
          t2(sys.oo(j, i), sys.vv(b, a)) = val;
        }
}

// One implicit solve of y = base + a * i * R(y), preconditioned by the
// diagonal Fock gaps. Returns false if the fixed point stalls.
bool implicit_solve(const CCReference& ref, const Eigen::MatrixXcd& base1,
                    const Eigen::MatrixXcd& base2, double a, CCState& y, double tol,
                    int max_iter) {
  const CCSystem& sys = ref.sys;
  Eigen::MatrixXcd r1, r2;
  for (int it = 0; it < max_iter; ++it) {
    ccsd_residuals(y, sys, r1, r2);
    double delta = 0.0;
    for (int i = 0; i < sys.no; ++i)
      for (int aa = 0; aa < sys.nv; ++aa) {
        const double d = sys.f(sys.virt[aa], sys.virt[aa]) - sys.f(sys.occ[i], sys.occ[i]);
        const cd denom = 1.0 - a * iu * d;
        const cd next = (base1(i, aa) + a * iu * (r1(i, aa) - d * y.t1(i, aa))) / denom;
        delta = std::max(delta, std::abs(next - y.t1(i, aa)));
        y.t1(i, aa) = next;
      }
    for (int i = 0; i < sys.no; ++i)
      for (int j = 0; j < sys.no; ++j)
        for (int aa = 0; aa < sys.nv; ++aa)
          for (int bb = 0; bb < sys.nv; ++bb) {
            const double d = sys.f(sys.virt[aa], sys.virt[aa]) +
                             sys.f(sys.virt[bb], sys.virt[bb]) -
                             sys.f(sys.occ[i], sys.occ[i]) - sys.f(sys.occ[j], sys.occ[j]);
            const cd denom = 1.0 - a * iu * d;
            const int ij = sys.oo(i, j), ab = sys.vv(aa, bb);
            const cd next = (base2(ij, ab) + a * iu * (r2(ij, ab) - d * y.t2(ij, ab))) / denom;
            delta = std::max(delta, std::abs(next - y.t2(ij, ab)));
            y.t2(ij, ab) = next;
          }
    if (delta < tol) return true;
  }
  return false;
}

}  // namespace

CCTrajectory propagate_from(const CCReference& ref, const PropagateOptions& opts, CCState state,
                            CCTrajectory history) {
  if (opts.dt <= 0.0 || opts.t_max < opts.dt)
    throw std::invalid_argument("propagate: need dt > 0 and t_max >= dt");
  const CCSystem& sys = ref.sys;

  CCTrajectory traj = std::move(history);
  traj.dt = opts.dt;
  traj.t_max = opts.t_max;
  auto record = [&](const CCState& s) {
    traj.times.push_back(s.tau);
    traj.cumulant.push_back(s.cumulant);
    traj.t1_norm.push_back(s.t1.norm());
    traj.t2_norm.push_back(s.t2.norm());
  };
  if (traj.times.empty()) record(state);

  const long n_steps = std::lround(opts.t_max / opts.dt);
  const bool trapezoid = opts.integrator == Integrator::trapezoid;

  // advance one step of size h, recursing on halved steps if the inner
  // fixed point stalls
  std::function<void(CCState&, double, int)> advance = [&](CCState& s, double h, int depth) {
    CCState base = s;
    Eigen::MatrixXcd r1_n, r2_n;
    double a;
    cd c_base;
    if (trapezoid) {
      ccsd_residuals(s, sys, r1_n, r2_n);
      base.t1 += 0.5 * h * iu * r1_n;
      base.t2 += 0.5 * h * iu * r2_n;
      a = 0.5 * h;
      c_base = s.cumulant + 0.5 * h * cumulant_rhs(s, sys);
    } else {
      a = h;
      c_base = s.cumulant;
    }
    CCState y = s;  // warm start
    if (!implicit_solve(ref, base.t1, base.t2, a, y, opts.fp_tol, opts.fp_max)) {
      if (depth >= 4)
        throw std::runtime_error("propagate: fixed point failed to converge after 4 halvings at tau=" +
                                 std::to_string(s.tau));
      advance(s, 0.5 * h, depth + 1);
      advance(s, 0.5 * h, depth + 1);
      return;
    }
    antisymmetrize(y.t2, sys);
    y.cumulant = c_base + a * cumulant_rhs(y, sys);
    y.tau = s.tau + h;
    s = std::move(y);
    if (s.t1.norm() + s.t2.norm() > 1e3)
      throw std::runtime_error("propagate: amplitude norm diverged at tau=" + std::to_string(s.tau));
  };

  const long done = std::lround(state.tau / opts.dt);
  for (long step = done; step < n_steps; ++step) {
    advance(state, opts.dt, 0);
    state.tau = (step + 1) * opts.dt;  // keep the grid exactly uniform
    record(state);
    if (!opts.checkpoint_path.empty() && opts.checkpoint_every > 0 &&
        (step + 1) % opts.checkpoint_every == 0)
      save_checkpoint(opts.checkpoint_path, state, traj);
  }
  if (!opts.checkpoint_path.empty()) save_checkpoint(opts.checkpoint_path, state, traj);
  return traj;
}

SpectralFunction gf_and_spectrum(const CCTrajectory& traj, const CCReference& ref,
                                 double theta_damp_ev, const GridSpec& grid) {
  if (theta_damp_ev <= 0.0) throw std::domain_error("gf_and_spectrum: damping must be positive");
  if (traj.times.size() < 2) throw std::invalid_argument("gf_and_spectrum: trajectory too short");

  const std::size_t n = traj.times.size();
  const double e_pole = ref.eps_c + ref.e_corr;
  std::vector<cd> g(n);
  for (std::size_t k = 0; k < n; ++k)
    g[k] = -iu * std::exp(-iu * e_pole * traj.times[k] + traj.cumulant[k]);

  SpectralFunction sf;
  sf.theta_ev = theta_damp_ev;
  const int np = grid.points();
  sf.grid.resize(np);
  sf.values.resize(np);
  const double theta_ha = theta_damp_ev / hartree_to_ev;
  for (int p = 0; p < np; ++p) {
    sf.grid(p) = grid.lo_ev + p * grid.step_ev;
    const double w = sf.grid(p) / hartree_to_ev;
    cd acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double t = traj.times[k];
      const cd kernel = std::exp(cd(-theta_ha * t, w * t));
      const double quad = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
      acc += quad * kernel * g[k];
    }
    acc *= traj.dt;
    sf.values(p) = std::max(0.0, -acc.imag() / std::numbers::pi / hartree_to_ev);
  }
  return sf;
}

StaticCCSD solve_static_ccsd(const SpinIntegrals& ints, std::uint64_t occ_bits, double tol,
                             int max_iter) {
  CCSystem sys = make_cc_system(ints, occ_bits);
  CCState s = zero_state(sys);
  Eigen::MatrixXcd r1, r2;
  StaticCCSD out;
  for (int it = 1; it <= max_iter; ++it) {
    ccsd_residuals(s, sys, r1, r2);
    double rmax = 0.0;
    for (int i = 0; i < sys.no; ++i)
      for (int a = 0; a < sys.nv; ++a) {
        rmax = std::max(rmax, std::abs(r1(i, a)));
        const double d = sys.f(sys.occ[i], sys.occ[i]) - sys.f(sys.virt[a], sys.virt[a]);
        s.t1(i, a) += r1(i, a) / d;
      }
    for (int i = 0; i < sys.no; ++i)
      for (int j = 0; j < sys.no; ++j)
        for (int a = 0; a < sys.nv; ++a)
          for (int b = 0; b < sys.nv; ++b) {
            const cd r = r2(sys.oo(i, j), sys.vv(a, b));
            rmax = std::max(rmax, std::abs(r));
            const double d = sys.f(sys.occ[i], sys.occ[i]) + sys.f(sys.occ[j], sys.occ[j]) -
                             sys.f(sys.virt[a], sys.virt[a]) - sys.f(sys.virt[b], sys.virt[b]);
            s.t2(sys.oo(i, j), sys.vv(a, b)) += r / d;
          }
    out.iterations = it;
    if (rmax < tol) {
      out.converged = true;
      break;
    }
  }
  out.e_corr = (cumulant_rhs(s, sys) / iu).real();
  out.t1 = std::move(s.t1);
  out.t2 = std::move(s.t2);
  return out;
}

CCReference init_reference(std::shared_ptr<const SpinIntegrals> ints, int c, ECorrSource source) {
  double e_corr;
  if (source == ECorrSource::ccsd) {
    auto cc = solve_static_ccsd(*ints, ints->reference_occupation);
    if (!cc.converged) throw std::runtime_error("init_reference: static CCSD did not converge");
    e_corr = cc.e_corr;
  } else {
    const int n_beta = ints->n_elec / 2;
    const int n_alpha = ints->n_elec - n_beta;
    auto space = std::make_shared<const CISpace>(CISpace::sector(ints->m, n_alpha, n_beta));
    auto h = build_hamiltonian(*ints, space);
    e_corr = correlation_energy(h, Determinant{ints->reference_occupation, ints->m});
  }
  return init_reference(std::move(ints), c, e_corr);
}

namespace {
constexpr std::uint32_t checkpoint_magic = 0x43534b31;  // "CSK1"
template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
void get(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof v);
}
}  // namespace

void save_checkpoint(const std::string& path, const CCState& state, const CCTrajectory& traj) {
  std::ofstream os(path + ".tmp", std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  put(os, checkpoint_magic);
  const std::uint32_t version = 1;
  put(os, version);
  put(os, traj.dt);
  put(os, traj.t_max);
  const std::uint64_t no = state.t1.rows(), nv = state.t1.cols();
  put(os, no);
  put(os, nv);
  put(os, state.tau);
  put(os, state.cumulant);
  os.write(reinterpret_cast<const char*>(state.t1.data()), state.t1.size() * sizeof(cd));
  os.write(reinterpret_cast<const char*>(state.t2.data()), state.t2.size() * sizeof(cd));
  const std::uint64_t n = traj.times.size();
  put(os, n);
  if (n > 0) {
    os.write(reinterpret_cast<const char*>(traj.times.data()), n * sizeof(double));
    os.write(reinterpret_cast<const char*>(traj.cumulant.data()), n * sizeof(cd));
    os.write(reinterpret_cast<const char*>(traj.t1_norm.data()), n * sizeof(double));
    os.write(reinterpret_cast<const char*>(traj.t2_norm.data()), n * sizeof(double));
  }
  os.close();
  std::filesystem::rename(path + ".tmp", path);
}

std::pair<CCState, CCTrajectory> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
  std::uint32_t magic = 0, version = 0;
  get(is, magic);
  get(is, version);
  if (magic != checkpoint_magic || version != 1)
    throw std::runtime_error("checkpoint header mismatch: " + path);
  CCState state;
  CCTrajectory traj;
  get(is, traj.dt);
  get(is, traj.t_max);
  std::uint64_t no = 0, nv = 0;
  get(is, no);
  get(is, nv);
  get(is, state.tau);
  get(is, state.cumulant);
  state.t1.resize(no, nv);
  state.t2.resize(no * no, nv * nv);
  is.read(reinterpret_cast<char*>(state.t1.data()), state.t1.size() * sizeof(cd));
  is.read(reinterpret_cast<char*>(state.t2.data()), state.t2.size() * sizeof(cd));
  std::uint64_t n = 0;
  get(is, n);
  traj.times.resize(n);
  traj.cumulant.resize(n);
  traj.t1_norm.resize(n);
  traj.t2_norm.resize(n);
  is.read(reinterpret_cast<char*>(traj.times.data()), n * sizeof(double));
  is.read(reinterpret_cast<char*>(traj.cumulant.data()), n * sizeof(cd));
  is.read(reinterpret_cast<char*>(traj.t1_norm.data()), n * sizeof(double));
  is.read(reinterpret_cast<char*>(traj.t2_norm.data()), n * sizeof(double));
  if (!is) throw std::runtime_error("checkpoint truncated: " + path);
  return {std::move(state), std::move(traj)};
}

}  // namespace corespec
