#include "corespec/integrals.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace corespec {

namespace {

std::string fortran_to_c_float(std::string tok) {
  for (char& c : tok)
    if (c == 'D' || c == 'd') c = 'E';
  return tok;
}

[[noreturn]] void parse_fail(int line_no, const std::string& what) {
  throw std::runtime_error("FCIDUMP parse error at line " + std::to_string(line_no) + ": " + what);
}

// Canonical representative of the 8 chemists' permutations of (i,j,k,l).
std::array<int, 4> canonical_g_key(int i, int j, int k, int l) {
  std::array<std::array<int, 4>, 8> perms = {{{i, j, k, l},
                                              {j, i, k, l},
                                              {i, j, l, k},
                                              {j, i, l, k},
                                              {k, l, i, j},
                                              {l, k, i, j},
                                              {k, l, j, i},
                                              {l, k, j, i}}};
  return *std::min_element(perms.begin(), perms.end());
}

}  // namespace

IntegralStore parse_fcidump(std::istream& in) {
  std::string line;
  int line_no = 0;

  // Gather the namelist header up to "/" or "&END".
  std::string header;
  bool header_done = false;
  while (!header_done && std::getline(in, line)) {
    ++line_no;
    std::string upper = line;
    std::transform(upper.begin(), upper.end(), upper.begin(), ::toupper);
    auto end_at = std::min(upper.find("&END"), upper.find('/'));
    if (end_at != std::string::npos) {
      header += ' ' + line.substr(0, end_at);
      header_done = true;
    } else {
      header += ' ' + line;
    }
  }
  if (!header_done) parse_fail(line_no, "unterminated namelist header (no '/' or '&END')");

  // Tokenize KEY=VALUES pairs. Values run until the next KEY= or end.
  std::transform(header.begin(), header.end(), header.begin(), ::toupper);
  std::replace(header.begin(), header.end(), ',', ' ');
  std::map<std::string, std::vector<std::string>> keys;
  {
    std::istringstream hs(header);
    std::string tok, current;
    while (hs >> tok) {
      if (tok[0] == '&') continue;  // &FCI
      auto eq = tok.find('=');
      if (eq != std::string::npos) {
        current = tok.substr(0, eq);
        keys[current];
        std::string rest = tok.substr(eq + 1);
        if (!rest.empty()) keys[current].push_back(rest);
      } else if (!current.empty()) {
        keys[current].push_back(tok);
      } else {
        parse_fail(line_no, "stray token '" + tok + "' before any KEY=");
      }
    }
  }

  auto get_int = [&](const std::string& key) {
    auto it = keys.find(key);
    if (it == keys.end() || it->second.empty())
      parse_fail(line_no, "missing " + key + " in header");
    return std::stoi(it->second.front());
  };

  IntegralStore store;
  store.n_orb = get_int("NORB");
  store.n_elec = get_int("NELEC");
  store.ms2 = keys.count("MS2") && !keys["MS2"].empty() ? std::stoi(keys["MS2"].front()) : 0;
  if (store.n_orb < 1) parse_fail(line_no, "NORB must be >= 1");
  if (store.n_elec < 1) parse_fail(line_no, "NELEC must be >= 1");
  if (keys.count("ORBSYM"))
    for (const auto& s : keys["ORBSYM"]) store.orbsym.push_back(std::stoi(s));

  const int n = store.n_orb;
  store.h = Eigen::MatrixXd::Zero(n, n);
  store.g.assign(static_cast<std::size_t>(n) * n * n * n, 0.0);

  // Conflict detection on re-specified entries.
  std::map<std::array<int, 4>, double> seen_g;
  std::map<std::array<int, 2>, double> seen_h;
  bool seen_e_nuc = false;
  double e_nuc_val = 0.0;
  constexpr double conflict_tol = 1e-10;

  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(fortran_to_c_float(line));
    double value;
    int i, j, k, l;
    if (!(ls >> value)) {
      // blank line is fine, anything else is not
      std::istringstream probe(line);
      std::string tok;
      if (probe >> tok) parse_fail(line_no, "expected 'value i j k l'");
      continue;
    }
    if (!(ls >> i >> j >> k >> l)) parse_fail(line_no, "expected four indices after value");
    auto check = [&](int idx) {
      if (idx < 0 || idx > n)
        throw std::out_of_range("FCIDUMP index " + std::to_string(idx) + " out of 1.." +
                                std::to_string(n) + " at line " + std::to_string(line_no));
    };
    check(i); check(j); check(k); check(l);

    if (i == 0 && j == 0 && k == 0 && l == 0) {
      if (seen_e_nuc && std::abs(e_nuc_val - value) > conflict_tol)
        throw std::runtime_error("FCIDUMP conflicting core energies at line " + std::to_string(line_no));
      e_nuc_val = value;
      seen_e_nuc = true;
    } else if (i > 0 && j == 0 && k == 0 && l == 0) {
      // orbital-energy record; informational, not stored
    } else if (i > 0 && j > 0 && k == 0 && l == 0) {
      std::array<int, 2> key = {std::min(i, j) - 1, std::max(i, j) - 1};
      auto it = seen_h.find(key);
      if (it != seen_h.end() && std::abs(it->second - value) > conflict_tol)
        throw std::runtime_error("FCIDUMP conflicting h(" + std::to_string(i) + "," +
                                 std::to_string(j) + ") at line " + std::to_string(line_no));
      seen_h[key] = value;
      store.h(i - 1, j - 1) = value;
      store.h(j - 1, i - 1) = value;
    } else if (i > 0 && j > 0 && k > 0 && l > 0) {
      auto key = canonical_g_key(i - 1, j - 1, k - 1, l - 1);
      auto it = seen_g.find(key);
      if (it != seen_g.end() && std::abs(it->second - value) > conflict_tol)
        throw std::runtime_error("FCIDUMP conflicting g entry at line " + std::to_string(line_no));
      seen_g[key] = value;
      const int a = i - 1, b = j - 1, c = k - 1, d = l - 1;
      auto put = [&](int p, int q, int r, int s) {
        store.g[((static_cast<std::size_t>(p) * n + q) * n + r) * n + s] = value;
      };
      put(a, b, c, d); put(b, a, c, d); put(a, b, d, c); put(b, a, d, c);
      put(c, d, a, b); put(d, c, a, b); put(c, d, b, a); put(d, c, b, a);
    } else {
      parse_fail(line_no, "unrecognized index pattern");
    }
  }
  store.e_nuc = e_nuc_val;
  return store;
}

IntegralStore parse_fcidump_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open FCIDUMP file: " + path);
  return parse_fcidump(in);
}

void write_fcidump(const IntegralStore& store, std::ostream& out) {
  const int n = store.n_orb;
  out << "&FCI NORB=" << n << ",NELEC=" << store.n_elec << ",MS2=" << store.ms2 << ",\n";
  out << "  ORBSYM=";
  for (int i = 0; i < n; ++i)
    out << (i < static_cast<int>(store.orbsym.size()) ? store.orbsym[i] : 1) << ",";
  out << "\n  ISYM=1,\n &END\n";
  out.precision(17);
  out << std::scientific;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j)
      for (int k = 0; k <= i; ++k)
        for (int l = 0; l <= (k == i ? j : k); ++l) {
          const double val = store.g_chem(i, j, k, l);
          if (val != 0.0)
            out << val << ' ' << i + 1 << ' ' << j + 1 << ' ' << k + 1 << ' ' << l + 1 << '\n';
        }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j)
      if (store.h(i, j) != 0.0) out << store.h(i, j) << ' ' << i + 1 << ' ' << j + 1 << " 0 0\n";
  out << store.e_nuc << " 0 0 0 0\n";
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
  std::uint64_t hash = 0xcbf29ce484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  std::ostringstream os;
  os << std::hex << hash;
  return os.str();
}

SpinIntegrals to_spin_integrals(const IntegralStore& store) {
  SpinIntegrals out;
  const int n = store.n_orb;
  out.m = 2 * n;
  out.n_elec = store.n_elec;
  out.e_nuc = store.e_nuc;
  if (store.n_elec > out.m)
    throw std::invalid_argument("to_spin_integrals: " + std::to_string(store.n_elec) +
                                " electrons exceed " + std::to_string(out.m) + " spin-orbitals");
  const int m = out.m;

  out.h = Eigen::MatrixXd::Zero(m, m);
  for (int p = 0; p < m; ++p)
    for (int q = 0; q < m; ++q)
      if (p % 2 == q % 2) out.h(p, q) = store.h(p / 2, q / 2);

  // <pq|rs> (physicists') = (p r | q s) (chemists', spatial) with spin matching
  // on (p,r) and (q,s); v = <pq|rs> - <pq|sr>.
  out.v.assign(static_cast<std::size_t>(m) * m * m * m, 0.0);
  auto phys = [&](int p, int q, int r, int s) -> double {
    if (p % 2 != r % 2 || q % 2 != s % 2) return 0.0;
    return store.g_chem(p / 2, r / 2, q / 2, s / 2);
  };
  std::size_t idx = 0;
  for (int p = 0; p < m; ++p)
    for (int q = 0; q < m; ++q)
      for (int r = 0; r < m; ++r)
        for (int s = 0; s < m; ++s, ++idx) out.v[idx] = phys(p, q, r, s) - phys(p, q, s, r);

  out.reference_occupation = store.n_elec >= 64 ? ~0ull : ((1ull << store.n_elec) - 1ull);

  out.eps = Eigen::VectorXd::Zero(m);
  for (int p = 0; p < m; ++p) {
    double e = out.h(p, p);
    for (int i = 0; i < m; ++i)
      if (out.reference_occupation >> i & 1ull) e += out.v_as(p, i, p, i);
    out.eps(p) = e;
  }
  return out;
}

FockNMinus1 fock_n_minus_1(const SpinIntegrals& ints, int c) {
  if (c < 0 || c >= ints.m)
    throw std::invalid_argument("fock_n_minus_1: spin-orbital index out of range");
  if (!(ints.reference_occupation >> c & 1ull))
    throw std::domain_error("fock_n_minus_1: core spin-orbital " + std::to_string(c + 1) +
                            " is not occupied in the reference");
  FockNMinus1 out;
  out.core_index = c;
  out.f = Eigen::MatrixXd::Zero(ints.m, ints.m);
  for (int p = 0; p < ints.m; ++p)
    for (int q = 0; q < ints.m; ++q)
      out.f(p, q) = (p == q ? ints.eps(p) : 0.0) - ints.v_as(p, c, q, c);
  return out;
}

}  // namespace corespec
