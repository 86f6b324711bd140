#include "stril/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stril {

void jacobi_eigen_symmetric(const Tensor& m, std::vector<double>& eigenvalues,
                            Tensor& eigenvectors) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1))
    throw std::invalid_argument("jacobi_eigen_symmetric: square matrix required");
  const int d = m.dim(0);
  Tensor a = m;
  Tensor v({d, d});
  for (int i = 0; i < d; ++i) v.at(i, i) = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += a.at(p, q) * a.at(p, q);
    if (off < 1e-24) break;
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < d; ++i) {
          const double aip = a.at(i, p);
          const double aiq = a.at(i, q);
          a.at(i, p) = c * aip - s * aiq;
          a.at(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < d; ++i) {
          const double api = a.at(p, i);
          const double aqi = a.at(q, i);
          a.at(p, i) = c * api - s * aqi;
          a.at(q, i) = s * api + c * aqi;
        }
        for (int i = 0; i < d; ++i) {
          const double vip = v.at(i, p);
          const double viq = v.at(i, q);
          v.at(i, p) = c * vip - s * viq;
          v.at(i, q) = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> diag(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) diag[std::size_t(i)] = a.at(i, i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return diag[std::size_t(x)] > diag[std::size_t(y)]; });

  eigenvalues.assign(std::size_t(d), 0.0);
  eigenvectors = Tensor({d, d});
  for (int k = 0; k < d; ++k) {
    const int src = order[std::size_t(k)];
    eigenvalues[std::size_t(k)] = diag[std::size_t(src)];
    for (int i = 0; i < d; ++i) eigenvectors.at(k, i) = v.at(i, src);
  }
}

PcaResult pca_project(const Tensor& rows, int k) {
  if (rows.rank() != 2) throw std::invalid_argument("pca_project: row matrix required");
  const int n = rows.dim(0);
  const int d = rows.dim(1);
  if (n < 2) throw std::invalid_argument("pca_project: need at least two rows");
  if (k < 1 || k > d) throw std::invalid_argument("pca_project: k outside [1, d]");

  PcaResult out;
  out.mean.assign(std::size_t(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.mean[std::size_t(j)] += rows.at(i, j);
  for (double& m : out.mean) m /= double(n);

  Tensor centered({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) centered.at(i, j) = rows.at(i, j) - out.mean[std::size_t(j)];

  Tensor cov({d, d});
  for (int p = 0; p < d; ++p) {
    for (int q = p; q < d; ++q) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += centered.at(i, p) * centered.at(i, q);
      s /= double(n - 1);
      cov.at(p, q) = s;
      cov.at(q, p) = s;
    }
  }

  std::vector<double> eigenvalues;
  Tensor eigenvectors;
  jacobi_eigen_symmetric(cov, eigenvalues, eigenvectors);

  out.components = Tensor({k, d});
  out.explained_variance.assign(std::size_t(k), 0.0);
  for (int c = 0; c < k; ++c) {
    out.explained_variance[std::size_t(c)] = std::max(0.0, eigenvalues[std::size_t(c)]);
    int arg = 0;
    for (int j = 1; j < d; ++j)
      if (std::abs(eigenvectors.at(c, j)) > std::abs(eigenvectors.at(c, arg))) arg = j;
    const double sign = eigenvectors.at(c, arg) >= 0.0 ? 1.0 : -1.0;
    for (int j = 0; j < d; ++j) out.components.at(c, j) = sign * eigenvectors.at(c, j);
  }

  out.projected = Tensor({n, k});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += centered.at(i, j) * out.components.at(c, j);
      out.projected.at(i, c) = s;
    }
  return out;
}

}  // namespace stril
