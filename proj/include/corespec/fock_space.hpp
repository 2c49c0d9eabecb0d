#pragma once

#include <Eigen/SparseCore>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace corespec {

/// Occupation-number string |n_M ... n_1>. Bit i (0-based) stores n_{i+1},
/// i.e. the occupation of spin-orbital i. Packed into one machine word,
/// so M <= 64.
struct Determinant {
  std::uint64_t occ = 0;
  int m = 0;

  bool occupied(int i) const { return occ >> i & 1ull; }
  int popcount() const { return __builtin_popcountll(occ); }
  int n_alpha() const { return __builtin_popcountll(occ & 0x5555555555555555ull); }
  int n_beta() const { return __builtin_popcountll(occ & 0xaaaaaaaaaaaaaaaaull); }
  std::vector<int> occupied_list() const;

  /// Render as the ket |n_M ... n_1>.
  std::string ket() const;

  friend bool operator==(const Determinant& a, const Determinant& b) {
    return a.occ == b.occ && a.m == b.m;
  }
  friend bool operator<(const Determinant& a, const Determinant& b) { return a.occ < b.occ; }
};

struct SignedDeterminant {
  Determinant det;
  int sign = 1;  // (-1)^{sum_{k<i} n_k}
};

/// a_i^dagger |n>: vacuum (nullopt) if n_i = 1, else bit set with the string
/// phase. Index i is 0-based.
std::optional<SignedDeterminant> apply_create(const Determinant& d, int i);

/// a_i |n>: vacuum (nullopt) if n_i = 0, else bit cleared with the phase.
std::optional<SignedDeterminant> apply_annihilate(const Determinant& d, int i);

/// Number of holes of d relative to a reference occupation (excitation rank
/// of ionized-sector determinants: 1h = S, 2h1p = D, ...).
int excitation_rank(const Determinant& d, const Determinant& reference);

/// An ordered determinant basis. Sector spaces are labelled by (n_alpha,
/// n_beta); free spaces (arbitrary determinant lists, e.g. a whole Fock
/// space) carry no sector label. Determinants are kept sorted by bit-vector
/// value and the index map is the exact inverse of the list.
class CISpace {
 public:
  static CISpace sector(int m, int n_alpha, int n_beta);
  static CISpace truncated_sector(int m, int n_alpha, int n_beta, const Determinant& reference,
                                  int rank);
  static CISpace from_determinants(int m, std::vector<Determinant> dets);

  std::size_t size() const { return dets_.size(); }
  int m() const { return m_; }
  const Determinant& det(std::size_t k) const { return dets_[k]; }
  const std::vector<Determinant>& determinants() const { return dets_; }
  std::optional<std::size_t> find(const Determinant& d) const;

  std::optional<int> n_alpha() const { return n_alpha_; }
  std::optional<int> n_beta() const { return n_beta_; }
  std::optional<int> truncation_rank() const { return truncation_rank_; }
  const std::optional<Determinant>& reference() const { return reference_; }

 private:
  CISpace() = default;
  void build_index();

  std::vector<Determinant> dets_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  int m_ = 0;
  std::optional<int> n_alpha_, n_beta_;
  std::optional<int> truncation_rank_;
  std::optional<Determinant> reference_;
};

/// Enumerate a sector, optionally truncated at excitation rank `rank`
/// relative to `reference` (holes counted against the N-electron reference).
CISpace enumerate_space(int m, int n_alpha, int n_beta,
                        std::optional<Determinant> reference = std::nullopt,
                        std::optional<int> rank = std::nullopt);

/// A second-quantized operator: sum of scalar-weighted products of
/// creation/annihilation factors. Factors apply right-to-left, as written.
struct OperatorFactor {
  bool creation = false;
  int index = 0;  // 0-based spin-orbital
};
struct OperatorTerm {
  double coeff = 1.0;
  std::vector<OperatorFactor> factors;
};
using OperatorExpr = std::vector<OperatorTerm>;

/// Matrix representation over determinant bases: codomain.size x domain.size.
/// Results falling outside the codomain are projected out (dropped), which is
/// what truncated-CI spaces require; a particle-number change inconsistent
/// with the sector labels is a shape error.
Eigen::SparseMatrix<double> operator_matrix(const OperatorExpr& op, const CISpace& domain,
                                            const CISpace& codomain);

}  // namespace corespec
