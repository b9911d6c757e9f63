#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Sparse>

#include "mmsem/mesh.hpp"

namespace mmsem {

/// Integer CSR matrix mapping sub-edge fluxes to the net outflow of each
/// sub-volume. Rows are pressure unknowns, columns are flux unknowns.
struct IncidenceMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr;
  std::vector<int> col_idx;
  std::vector<std::int8_t> values;

  std::size_t nonzeros() const noexcept { return values.size(); }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(cols)) throw UsageError("IncidenceMatrix::apply: length mismatch");
    std::vector<double> y(rows, 0.0);
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += values[k] * x[col_idx[k]];
      y[r] = s;
    }
    return y;
  }

  Eigen::SparseMatrix<double> to_sparse() const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(nonzeros());
    for (int r = 0; r < rows; ++r)
      for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) t.emplace_back(r, col_idx[k], values[k]);
    Eigen::SparseMatrix<double> m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }

  /// Coordinate-list dump, one "row col value" line per stored entry.
  void dump(std::ostream& os) const {
    for (int r = 0; r < rows; ++r)
      for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) os << r << ' ' << col_idx[k] << ' ' << int{values[k]} << '\n';
  }

  friend bool operator==(const IncidenceMatrix&, const IncidenceMatrix&) = default;
};

/// Discrete divergence: row (e, i, j) holds +1 for q^x_{i,j}, -1 for
/// q^x_{i-1,j}, +1 for q^y_{i,j} and -1 for q^y_{i,j-1}. No metric enters.
inline IncidenceMatrix incidence_div(const Mesh& mesh, const DofMap& dofs) {
  const int N = mesh.degree;
  IncidenceMatrix E;
  E.rows = dofs.n_p;
  E.cols = dofs.n_q();
  E.row_ptr.assign(E.rows + 1, 0);
  E.col_idx.resize(4 * static_cast<std::size_t>(E.rows));
  E.values.resize(E.col_idx.size());
  for (int id = 0; id < mesh.element_count(); ++id) {
    const auto& flux = dofs.element_flux[id];
    for (int j = 1; j <= N; ++j) {
      for (int i = 1; i <= N; ++i) {
        const int r = dofs.element_pressure[id][DofMap::local_p(N, i, j)];
        std::array<std::pair<int, std::int8_t>, 4> row = {{{flux[DofMap::local_qx(N, i, j)], 1},
                                                           {flux[DofMap::local_qx(N, i - 1, j)], -1},
                                                           {flux[DofMap::local_qy(N, i, j)], 1},
                                                           {flux[DofMap::local_qy(N, i, j - 1)], -1}}};
        std::sort(row.begin(), row.end());
        for (int k = 0; k < 4; ++k) {
          E.col_idx[4 * r + k] = row[k].first;
          E.values[4 * r + k] = row[k].second;
        }
      }
    }
  }
  for (int r = 0; r <= E.rows; ++r) E.row_ptr[r] = 4 * r;
  return E;
}

}  // namespace mmsem
