#include "corespec/fock_space.hpp"

#include <algorithm>
#include <stdexcept>

namespace corespec {

namespace {

inline int prefix_sign(std::uint64_t occ, int i) {
  const std::uint64_t below = i == 0 ? 0ull : occ & ((1ull << i) - 1ull);
  return __builtin_popcountll(below) % 2 == 0 ? 1 : -1;
}

void check_index(const Determinant& d, int i) {
  if (i < 0 || i >= d.m)
    throw std::invalid_argument("spin-orbital index " + std::to_string(i + 1) +
                                " out of 1.." + std::to_string(d.m));
}

}  // namespace

std::vector<int> Determinant::occupied_list() const {
  std::vector<int> out;
  out.reserve(popcount());
  for (std::uint64_t w = occ; w; w &= w - 1) out.push_back(__builtin_ctzll(w));
  return out;
}

std::string Determinant::ket() const {
  std::string s = "|";
  for (int i = m - 1; i >= 0; --i) s += occupied(i) ? '1' : '0';
  return s + ">";
}

std::optional<SignedDeterminant> apply_create(const Determinant& d, int i) {
  check_index(d, i);
  if (d.occupied(i)) return std::nullopt;
  return SignedDeterminant{Determinant{d.occ | (1ull << i), d.m}, prefix_sign(d.occ, i)};
}

std::optional<SignedDeterminant> apply_annihilate(const Determinant& d, int i) {
  check_index(d, i);
  if (!d.occupied(i)) return std::nullopt;
  return SignedDeterminant{Determinant{d.occ & ~(1ull << i), d.m}, prefix_sign(d.occ, i)};
}

int excitation_rank(const Determinant& d, const Determinant& reference) {
  return __builtin_popcountll(reference.occ & ~d.occ);
}

void CISpace::build_index() {
  std::sort(dets_.begin(), dets_.end());
  index_.clear();
  index_.reserve(dets_.size());
  for (std::size_t k = 0; k < dets_.size(); ++k) index_[dets_[k].occ] = k;
  if (index_.size() != dets_.size())
    throw std::invalid_argument("CISpace: duplicate determinants");
}

std::optional<std::size_t> CISpace::find(const Determinant& d) const {
  auto it = index_.find(d.occ);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

CISpace CISpace::sector(int m, int n_alpha, int n_beta) {
  if (m < 2 || m > 64 || m % 2 != 0)
    throw std::invalid_argument("CISpace::sector: m must be even and in 2..64");
  const int n_orb = m / 2;
  if (n_alpha < 0 || n_beta < 0 || n_alpha > n_orb || n_beta > n_orb)
    throw std::invalid_argument("CISpace::sector: electron counts exceed channel capacity");

  // All n-subsets of n_orb bits, in increasing numeric order (Gosper).
  auto channel_strings = [n_orb](int n) {
    std::vector<std::uint64_t> out;
    if (n == 0) {
      out.push_back(0);
      return out;
    }
    std::uint64_t v = (1ull << n) - 1ull;
    const std::uint64_t limit = 1ull << n_orb;
    while (v < limit) {
      out.push_back(v);
      std::uint64_t t = v | (v - 1);
      v = (t + 1) | (((~t & (t + 1)) - 1) >> (__builtin_ctzll(v) + 1));
    }
    return out;
  };
  auto spread = [](std::uint64_t bits, int shift) {
    std::uint64_t out = 0;
    for (int k = 0; bits; bits >>= 1, ++k)
      if (bits & 1ull) out |= 1ull << (2 * k + shift);
    return out;
  };

  CISpace space;
  space.m_ = m;
  space.n_alpha_ = n_alpha;
  space.n_beta_ = n_beta;
  const auto alphas = channel_strings(n_alpha);
  const auto betas = channel_strings(n_beta);
  space.dets_.reserve(alphas.size() * betas.size());
  for (std::uint64_t a : alphas)
    for (std::uint64_t b : betas)
      space.dets_.push_back(Determinant{spread(a, 0) | spread(b, 1), m});
  space.build_index();
  return space;
}

CISpace CISpace::truncated_sector(int m, int n_alpha, int n_beta, const Determinant& reference,
                                  int rank) {
  const int n_ref = reference.popcount();
  const int n_sector = n_alpha + n_beta;
  if (rank < 1 && n_sector < n_ref)
    throw std::domain_error("truncated_sector: rank < 1 admits no ionized determinant");
  if (rank < 0) throw std::domain_error("truncated_sector: negative rank");
  CISpace full = sector(m, n_alpha, n_beta);
  CISpace space;
  space.m_ = m;
  space.n_alpha_ = n_alpha;
  space.n_beta_ = n_beta;
  space.truncation_rank_ = rank;
  space.reference_ = reference;
  for (const auto& d : full.dets_)
    if (excitation_rank(d, reference) <= rank) space.dets_.push_back(d);
  space.build_index();
  return space;
}

CISpace CISpace::from_determinants(int m, std::vector<Determinant> dets) {
  if (m < 1 || m > 64) throw std::invalid_argument("CISpace: m must be in 1..64");
  CISpace space;
  space.m_ = m;
  space.dets_ = std::move(dets);
  for (auto& d : space.dets_) d.m = m;
  space.build_index();
  return space;
}

CISpace enumerate_space(int m, int n_alpha, int n_beta, std::optional<Determinant> reference,
                        std::optional<int> rank) {
  if (rank && !reference)
    throw std::invalid_argument("enumerate_space: rank requires a reference determinant");
  if (rank) return CISpace::truncated_sector(m, n_alpha, n_beta, *reference, *rank);
  return CISpace::sector(m, n_alpha, n_beta);
}

Eigen::SparseMatrix<double> operator_matrix(const OperatorExpr& op, const CISpace& domain,
                                            const CISpace& codomain) {
  if (domain.m() != codomain.m())
    throw std::invalid_argument("operator_matrix: domain/codomain spin-orbital counts differ");

  // Sector-labelled spaces get the particle-number shape check per term.
  const bool check_sectors = domain.n_alpha() && codomain.n_alpha();
  for (const auto& term : op) {
    int da = 0, db = 0;
    for (const auto& f : term.factors) {
      const int delta = f.creation ? 1 : -1;
      (f.index % 2 == 0 ? da : db) += delta;
    }
    if (check_sectors &&
        (da != *codomain.n_alpha() - *domain.n_alpha() || db != *codomain.n_beta() - *domain.n_beta()))
      throw std::invalid_argument("operator_matrix: term particle-number change does not match sectors");
  }

  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t col = 0; col < domain.size(); ++col) {
    for (const auto& term : op) {
      Determinant d = domain.det(col);
      int sign = 1;
      bool alive = true;
      for (auto it = term.factors.rbegin(); it != term.factors.rend(); ++it) {
        auto r = it->creation ? apply_create(d, it->index) : apply_annihilate(d, it->index);
        if (!r) {
          alive = false;
          break;
        }
        d = r->det;
        sign *= r->sign;
      }
      if (!alive) continue;
      if (auto row = codomain.find(d))
        triplets.emplace_back(static_cast<int>(*row), static_cast<int>(col), term.coeff * sign);
    }
  }
  Eigen::SparseMatrix<double> mat(static_cast<int>(codomain.size()),
                                  static_cast<int>(domain.size()));
  mat.setFromTriplets(triplets.begin(), triplets.end());
  mat.prune(0.0);
  return mat;
}

}  // namespace corespec
