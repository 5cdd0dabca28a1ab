#include "pwadeepc/data_pipeline.hpp"

#include "pwadeepc/error.hpp"

#include <limits>
#include <random>

namespace pwadeepc {

namespace {

// Portable uniform draw in [0, 1); std distributions are implementation-defined.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Matrix plus_plus_seeds(const Matrix& pts, int k, std::mt19937_64& rng) {
  const Index n = pts.rows();
  Matrix c(k, pts.cols());
  c.row(0) = pts.row(static_cast<Index>(rng() % static_cast<std::uint64_t>(n)));
  Vector d2 = (pts.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Index pick = n - 1;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
    }
    c.row(j) = pts.row(pick);
    d2 = d2.cwiseMin((pts.rowwise() - c.row(j)).rowwise().squaredNorm());
  }
  return c;
}

struct LloydResult {
  Matrix centroids;
  std::vector<int> assign;
  double inertia = 0.0;
  bool empty = false;
};

LloydResult lloyd(const Matrix& pts, Matrix c, const KMeansOptions& opt) {
  const Index n = pts.rows();
  const int k = static_cast<int>(c.rows());
  LloydResult res;
  res.assign.assign(static_cast<size_t>(n), 0);
  for (int it = 0; it < opt.max_iter; ++it) {
    for (Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = (pts.row(i) - c.row(j)).squaredNorm();
        if (d < best) {
          best = d;
          res.assign[static_cast<size_t>(i)] = j;
        }
      }
    }
    Matrix next = Matrix::Zero(k, pts.cols());
    std::vector<Index> count(static_cast<size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const int j = res.assign[static_cast<size_t>(i)];
      next.row(j) += pts.row(i);
      ++count[static_cast<size_t>(j)];
    }
    for (int j = 0; j < k; ++j) {
      if (count[static_cast<size_t>(j)] == 0) {
        res.empty = true;
        return res;
      }
      next.row(j) /= static_cast<double>(count[static_cast<size_t>(j)]);
    }
    const double move = (next - c).rowwise().norm().maxCoeff();
    c = std::move(next);
    if (move <= opt.tol) break;
  }
  // Final assignment against the converged centroids.
  res.inertia = 0.0;
  for (Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      const double d = (pts.row(i) - c.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        res.assign[static_cast<size_t>(i)] = j;
      }
    }
    res.inertia += best;
  }
  std::vector<Index> count(static_cast<size_t>(k), 0);
  for (int a : res.assign) ++count[static_cast<size_t>(a)];
  for (Index cnt : count) res.empty = res.empty || cnt == 0;
  res.centroids = std::move(c);
  return res;
}

}  // namespace

ClusterModel kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& opt) {
  if (k < 1 || points.rows() < k) {
    throw Error(ErrorCode::InvalidArgument, "k-means needs at least k points");
  }
  std::mt19937_64 rng(seed);
  ClusterModel best;
  best.inertia = std::numeric_limits<double>::infinity();
  bool found = false;
  for (int r = 0; r < opt.restarts; ++r) {
    for (int attempt = 0; attempt <= opt.empty_retries; ++attempt) {
      LloydResult res = lloyd(points, plus_plus_seeds(points, k, rng), opt);
      if (res.empty) continue;
      if (res.inertia < best.inertia) {
        best.centroids = std::move(res.centroids);
        best.assign = std::move(res.assign);
        best.inertia = res.inertia;
        found = true;
      }
      break;
    }
  }
  if (!found) throw Error(ErrorCode::EmptyCluster, "every k-means restart left a cluster empty");
  best.seed = seed;
  best.restarts = opt.restarts;
  return best;
}

Vector regressor_at(const Dataset& ds, size_t t, int rho) {
  if (t < static_cast<size_t>(rho) || t >= ds.size()) {
    throw Error(ErrorCode::InvalidArgument, "regressor index out of range");
  }
  const size_t r = static_cast<size_t>(rho);
  std::vector<Vector> parts;
  for (size_t k = t - r; k < t; ++k) parts.push_back(ds.y[k]);
  for (size_t k = t - r; k <= t; ++k) parts.push_back(ds.u[k]);
  return stack(parts);
}

ClusterResult kmeans_modes(const Dataset& ds, int mode_count, int rho, std::uint64_t seed,
                           const KMeansOptions& opt) {
  if (mode_count < 2) throw Error(ErrorCode::InvalidArgument, "clustering needs S >= 2");
  if (rho < 0 || ds.size() <= static_cast<size_t>(rho)) {
    throw Error(ErrorCode::TooShort, "dataset not longer than the lag");
  }
  const size_t count = ds.size() - static_cast<size_t>(rho);
  const Index dim = ds.ny() * rho + ds.nu() * (rho + 1);
  Matrix pts(static_cast<Index>(count), dim);
  for (size_t i = 0; i < count; ++i) {
    pts.row(static_cast<Index>(i)) = regressor_at(ds, i + static_cast<size_t>(rho), rho).transpose();
  }
  ClusterResult out;
  out.model = kmeans(pts, mode_count, seed, opt);
  out.model.rho = rho;
  out.s_hat.assign(ds.size(), -1);
  for (size_t i = 0; i < count; ++i) out.s_hat[i + static_cast<size_t>(rho)] = out.model.assign[i];
  return out;
}

}  // namespace pwadeepc
