#include "bkrylov/sparse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace bkrylov {

SparseOperator SparseOperator::from_triplets(int n,
                                             std::vector<std::tuple<int, int, double>> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
    return std::get<1>(a) < std::get<1>(b);
  });
  SparseOperator A;
  A.n = n;
  A.row_offsets.assign(n + 1, 0);
  size_t i = 0;
  while (i < triplets.size()) {
    auto [r, c, v] = triplets[i];
    size_t j = i + 1;
    while (j < triplets.size() && std::get<0>(triplets[j]) == r && std::get<1>(triplets[j]) == c) {
      v += std::get<2>(triplets[j]);
      ++j;
    }
    if (r < 0 || r >= n || c < 0 || c >= n) throw InputError("triplet index out of range");
    A.cols.push_back(c);
    A.vals.push_back(v);
    A.row_offsets[r + 1]++;
    i = j;
  }
  for (int r = 0; r < n; ++r) A.row_offsets[r + 1] += A.row_offsets[r];
  return A;
}

double SparseOperator::diagonal_entry(int row) const {
  for (long k = row_offsets[row]; k < row_offsets[row + 1]; ++k)
    if (cols[k] == row) return vals[k];
  return 0.0;
}

bool SparseOperator::symmetric(double tol) const {
  std::map<std::pair<int, int>, double> up;
  for (int r = 0; r < n; ++r)
    for (long k = row_offsets[r]; k < row_offsets[r + 1]; ++k)
      if (cols[k] > r) up[{r, cols[k]}] = vals[k];
  for (int r = 0; r < n; ++r)
    for (long k = row_offsets[r]; k < row_offsets[r + 1]; ++k)
      if (cols[k] < r) {
        auto it = up.find({cols[k], r});
        const double other = it == up.end() ? 0.0 : it->second;
        if (std::abs(vals[k] - other) > tol) return false;
        if (it != up.end()) up.erase(it);
      }
  for (auto& [key, v] : up)
    if (std::abs(v) > tol) return false;
  return true;
}

SparseOperator load_matrixmarket(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open matrix file: " + path);
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw InputError("empty file: " + path, 1);
  ++lineno;
  std::istringstream hs(line);
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  for (auto* s : {&object, &format, &field, &symmetry})
    std::transform(s->begin(), s->end(), s->begin(), [](unsigned char c) { return std::tolower(c); });
  if (banner != "%%MatrixMarket" || object != "matrix")
    throw InputError("not a MatrixMarket matrix file", 1);
  if (format != "coordinate") throw InputError("only coordinate format is supported", 1);
  if (field == "pattern" || field == "complex")
    throw InputError("pattern/complex matrices are not supported", 1);
  if (field != "real" && field != "integer") throw InputError("unsupported field: " + field, 1);
  const bool symmetric = symmetry == "symmetric";
  if (!symmetric && symmetry != "general")
    throw InputError("unsupported symmetry: " + symmetry, 1);

  long rows = -1, cols = -1, entries = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ss(line);
    if (!(ss >> rows >> cols >> entries)) throw InputError("malformed size line", lineno);
    break;
  }
  if (rows < 0) throw InputError("missing size line", lineno);
  if (rows != cols) throw InputError("matrix is not square", lineno);

  std::vector<std::tuple<int, int, double>> trip;
  trip.reserve(symmetric ? 2 * entries : entries);
  long seen = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ss(line);
    long r, c;
    double v;
    if (!(ss >> r >> c >> v)) throw InputError("malformed entry", lineno);
    if (r < 1 || r > rows || c < 1 || c > cols) throw InputError("index out of range", lineno);
    trip.emplace_back(static_cast<int>(r - 1), static_cast<int>(c - 1), v);
    if (symmetric && r != c) trip.emplace_back(static_cast<int>(c - 1), static_cast<int>(r - 1), v);
    ++seen;
  }
  if (seen != entries)
    throw InputError("entry count mismatch: header says " + std::to_string(entries) + ", got " +
                         std::to_string(seen),
                     lineno);
  return SparseOperator::from_triplets(static_cast<int>(rows), std::move(trip));
}

void save_matrixmarket(const std::string& path, const SparseOperator& a) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write matrix file: " + path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.n << " " << a.n << " " << a.nnz() << "\n";
  char buf[64];
  for (int r = 0; r < a.n; ++r)
    for (long k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g", a.vals[k]);
      out << (r + 1) << " " << (a.cols[k] + 1) << " " << buf << "\n";
    }
}

SparseOperator generate_poisson2d(int m) {
  if (m <= 0) throw ConfigError("poisson2d: m must be positive");
  const int n = m * m;
  std::vector<std::tuple<int, int, double>> trip;
  trip.reserve(static_cast<size_t>(5) * n);
  auto idx = [m](int i, int j) { return i * m + j; };
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const int r = idx(i, j);
      trip.emplace_back(r, r, 4.0);
      if (i > 0) trip.emplace_back(r, idx(i - 1, j), -1.0);
      if (i < m - 1) trip.emplace_back(r, idx(i + 1, j), -1.0);
      if (j > 0) trip.emplace_back(r, idx(i, j - 1), -1.0);
      if (j < m - 1) trip.emplace_back(r, idx(i, j + 1), -1.0);
    }
  return SparseOperator::from_triplets(n, std::move(trip));
}

SparseOperator generate_biharmonic1d(int n) {
  if (n < 5) throw ConfigError("biharmonic1d: n must be >= 5");
  std::vector<std::tuple<int, int, double>> trip;
  const double st[5] = {1.0, -4.0, 6.0, -4.0, 1.0};
  for (int i = 0; i < n; ++i)
    for (int o = -2; o <= 2; ++o) {
      const int j = i + o;
      if (j >= 0 && j < n) trip.emplace_back(i, j, st[o + 2]);
    }
  return SparseOperator::from_triplets(n, std::move(trip));
}

SparseOperator generate_convdiff2d(int m, double eps, double bx, double by) {
  if (m <= 0) throw ConfigError("convdiff2d: m must be positive");
  const int n = m * m;
  const double h = 1.0 / (m + 1);
  std::vector<std::tuple<int, int, double>> trip;
  auto idx = [m](int i, int j) { return i * m + j; };
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const int r = idx(i, j);
      trip.emplace_back(r, r, 4.0 * eps);
      if (i > 0) trip.emplace_back(r, idx(i - 1, j), -eps - 0.5 * h * by);
      if (i < m - 1) trip.emplace_back(r, idx(i + 1, j), -eps + 0.5 * h * by);
      if (j > 0) trip.emplace_back(r, idx(i, j - 1), -eps - 0.5 * h * bx);
      if (j < m - 1) trip.emplace_back(r, idx(i, j + 1), -eps + 0.5 * h * bx);
    }
  return SparseOperator::from_triplets(n, std::move(trip));
}

SparseOperator generate_diag(const std::vector<double>& d) {
  std::vector<std::tuple<int, int, double>> trip;
  for (size_t i = 0; i < d.size(); ++i) trip.emplace_back(static_cast<int>(i), static_cast<int>(i), d[i]);
  return SparseOperator::from_triplets(static_cast<int>(d.size()), std::move(trip));
}

SparseOperator generate(const std::string& spec) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : spec) {
    if (ch == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  auto num = [&](size_t i, double dflt) { return parts.size() > i ? std::stod(parts[i]) : dflt; };
  if (parts[0] == "poisson2d" && parts.size() >= 2) return generate_poisson2d(std::stoi(parts[1]));
  if (parts[0] == "biharmonic1d" && parts.size() >= 2)
    return generate_biharmonic1d(std::stoi(parts[1]));
  if (parts[0] == "convdiff2d" && parts.size() >= 2)
    return generate_convdiff2d(std::stoi(parts[1]), num(2, 1.0), num(3, 0.0), num(4, 0.0));
  throw ConfigError("unknown generator spec: " + spec);
}

BlockVector generate_rhs(int n, int s, std::uint64_t seed) {
  BlockVector b(n, s);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < s; ++j)
      b(i, j) = uniform_pm1(seed, static_cast<std::uint64_t>(i) * s + j);
  return b;
}

}  // namespace bkrylov
