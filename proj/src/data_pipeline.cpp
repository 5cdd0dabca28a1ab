#include "pwadeepc/data_pipeline.hpp"

#include "pwadeepc/behavior_matrices.hpp"
#include "pwadeepc/error.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pwadeepc {

void label_with_pwarx(Dataset& ds, const PwarxModel& model) {
  ds.s_true = pwarx_labels(model, ds.u, ds.y);
}

std::vector<std::pair<size_t, size_t>> LocalDataset::segments() const {
  std::vector<std::pair<size_t, size_t>> out;
  for (size_t k = 0; k < segment_starts.size(); ++k) {
    const size_t end = k + 1 < segment_starts.size() ? segment_starts[k + 1] : u.size();
    if (end > segment_starts[k]) out.emplace_back(segment_starts[k], end);
  }
  return out;
}

std::vector<size_t> LocalDataset::window_starts(size_t depth) const {
  std::vector<size_t> out;
  if (depth == 0) return out;
  for (const auto& [b, e] : segments())
    for (size_t s = b; s + depth <= e; ++s) out.push_back(s);
  return out;
}

const char* to_string(WindowPolicy p) {
  return p == WindowPolicy::Concatenated ? "concatenated" : "segment_aware";
}

WindowPolicy window_policy_from_string(const std::string& s) {
  if (s == "concatenated") return WindowPolicy::Concatenated;
  if (s == "segment_aware") return WindowPolicy::SegmentAware;
  throw Error(ErrorCode::InvalidArgument, "unknown window policy '" + s + "'");
}

std::vector<LocalDataset> partition_dataset(const Dataset& ds, const std::vector<int>& labels,
                                            int mode_count, WindowPolicy policy,
                                            size_t min_window) {
  if (labels.size() != ds.size()) throw Error(ErrorCode::DimensionMismatch, "labels must cover the dataset");
  std::vector<LocalDataset> out(static_cast<size_t>(mode_count));
  for (int i = 0; i < mode_count; ++i) out[static_cast<size_t>(i)].mode = i;
  for (size_t t = 0; t < ds.size(); ++t) {
    const int s = labels[t];
    if (s < 0) continue;
    if (s >= mode_count) throw Error(ErrorCode::InvalidArgument, "label out of range");
    LocalDataset& d = out[static_cast<size_t>(s)];
    const bool new_segment = d.source.empty() ||
                             (policy == WindowPolicy::SegmentAware && d.source.back() + 1 != t);
    if (new_segment) d.segment_starts.push_back(d.u.size());
    d.u.push_back(ds.u[t]);
    d.y.push_back(ds.y[t]);
    d.source.push_back(t);
  }
  if (min_window > 0) {
    for (const auto& d : out) {
      if (d.window_starts(min_window).empty()) {
        throw Error(ErrorCode::InsufficientData,
                    "mode " + std::to_string(d.mode + 1) + " has " + std::to_string(d.size()) +
                        " samples and no window of depth " + std::to_string(min_window));
      }
    }
  }
  return out;
}

std::vector<double> triangular_reference(double amplitude, int period, double decay_per_period,
                                         size_t n) {
  if (period <= 0 || period % 2 != 0) throw Error(ErrorCode::InvalidArgument, "period must be positive and even");
  std::vector<double> r(n);
  for (size_t t = 0; t < n; ++t) {
    const size_t k = t / static_cast<size_t>(period);
    const double phase = static_cast<double>(t % static_cast<size_t>(period)) / period;
    const double a = amplitude * std::pow(1.0 - decay_per_period, static_cast<double>(k));
    double shape;
    if (phase < 0.25) {
      shape = 4.0 * phase;
    } else if (phase < 0.75) {
      shape = 2.0 - 4.0 * phase;
    } else {
      shape = 4.0 * phase - 4.0;
    }
    r[t] = a * shape;
  }
  return r;
}

std::vector<int> match_clusters_to_modes(const std::vector<int>& s_hat,
                                         const std::vector<int>& s_true, int mode_count) {
  const Matrix conf = confusion_matrix(s_hat, s_true, mode_count);
  std::vector<int> perm(static_cast<size_t>(mode_count));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_score = -1.0;
  do {
    double score = 0.0;
    for (int c = 0; c < mode_count; ++c) score += conf(perm[static_cast<size_t>(c)], c);
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<int> apply_permutation(const std::vector<int>& labels, const std::vector<int>& perm) {
  std::vector<int> out(labels.size());
  for (size_t t = 0; t < labels.size(); ++t) {
    out[t] = labels[t] < 0 ? labels[t] : perm.at(static_cast<size_t>(labels[t]));
  }
  return out;
}

double misclassification_rate(const std::vector<int>& s_hat, const std::vector<int>& s_true) {
  if (s_hat.size() != s_true.size()) throw Error(ErrorCode::DimensionMismatch, "label lengths differ");
  size_t total = 0, wrong = 0;
  for (size_t t = 0; t < s_hat.size(); ++t) {
    if (s_hat[t] < 0 || s_true[t] < 0) continue;
    ++total;
    wrong += s_hat[t] != s_true[t];
  }
  return total == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(total);
}

Matrix confusion_matrix(const std::vector<int>& s_hat, const std::vector<int>& s_true,
                        int mode_count) {
  if (s_hat.size() != s_true.size()) throw Error(ErrorCode::DimensionMismatch, "label lengths differ");
  Matrix c = Matrix::Zero(mode_count, mode_count);
  for (size_t t = 0; t < s_hat.size(); ++t) {
    if (s_hat[t] < 0 || s_true[t] < 0) continue;
    c(s_true[t], s_hat[t]) += 1.0;
  }
  return c;
}

PersistenceReport persistence_check(const LocalDataset& local, int order) {
  if (order < 1) throw Error(ErrorCode::InvalidArgument, "order must be at least 1");
  const auto starts = local.window_starts(static_cast<size_t>(order));
  PersistenceReport rep;
  rep.rows = static_cast<Index>(order) * (local.u.empty() ? 0 : local.u.front().size());
  rep.cols = static_cast<Index>(starts.size());
  if (rep.cols < rep.rows || rep.cols == 0) {
    throw Error(ErrorCode::TooShort, "input Hankel of order " + std::to_string(order) + " has " +
                                         std::to_string(rep.cols) + " columns for " +
                                         std::to_string(rep.rows) + " rows");
  }
  const Matrix H = windowed_hankel(local.u, starts, order);
  rep.rank = numerical_rank(H);
  rep.exciting = rep.rank == rep.rows;
  return rep;
}

PersistenceReport persistence_check(const std::vector<Vector>& u, int order) {
  LocalDataset d;
  d.u = u;
  d.segment_starts = {0};
  return persistence_check(d, order);
}

int aic_lag_select(const Dataset& ds, int max_lag, std::vector<AicEntry>* table) {
  if (max_lag < 1 || static_cast<size_t>(max_lag) * 4 >= ds.size()) {
    throw Error(ErrorCode::InvalidArgument, "max_lag must satisfy 1 <= max_lag < N/4");
  }
  const Index ny = ds.ny(), nu = ds.nu();
  const size_t first = static_cast<size_t>(max_lag);
  const Index rows = static_cast<Index>(ds.size() - first);
  double energy = 0.0;
  for (size_t t = first; t < ds.size(); ++t) energy += ds.y[t].squaredNorm();
  const double floor = 1e-20 * (energy / static_cast<double>(rows) + 1.0);
  int best_lag = 1;
  double best_aic = std::numeric_limits<double>::infinity();
  for (int n = 1; n <= max_lag; ++n) {
    const Index p = ny * n + nu * (n + 1) + 1;
    Matrix X(rows, p);
    Matrix Y(rows, ny);
    for (Index r = 0; r < rows; ++r) {
      const size_t t = first + static_cast<size_t>(r);
      Index c = 0;
      for (int j = 1; j <= n; ++j, c += ny) X.block(r, c, 1, ny) = ds.y[t - static_cast<size_t>(j)].transpose();
      for (int j = 0; j <= n; ++j, c += nu) X.block(r, c, 1, nu) = ds.u[t - static_cast<size_t>(j)].transpose();
      X(r, c) = 1.0;
      Y.row(r) = ds.y[t].transpose();
    }
    const Matrix theta = X.completeOrthogonalDecomposition().solve(Y);
    const double sse = (X * theta - Y).squaredNorm();
    const double mse = std::max(sse / static_cast<double>(rows), floor);
    const int params = static_cast<int>(p * ny);
    const double aic = static_cast<double>(rows) * std::log(mse) + 2.0 * params;
    if (table) table->push_back({n, sse, aic, params});
    if (aic < best_aic) {
      best_aic = aic;
      best_lag = n;
    }
  }
  return best_lag;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc()) throw Error(ErrorCode::Io, "bad number '" + s + "'");
  return v;
}

}  // namespace

std::string dataset_to_csv(const Dataset& ds, bool with_s_hat) {
  if (ds.nu() != 1 || ds.ny() != 1) throw Error(ErrorCode::InvalidArgument, "CSV export supports scalar u and y");
  std::string out = with_s_hat ? "t,u,y,s_true,s_hat\n" : "t,u,y,s_true\n";
  for (size_t t = 0; t < ds.size(); ++t) {
    const int st = t < ds.s_true.size() ? ds.s_true[t] : -1;
    out += std::to_string(t) + "," + fmt(ds.u[t](0)) + "," + fmt(ds.y[t](0)) + "," +
           std::to_string(st + 1);
    if (with_s_hat) {
      const int sh = t < ds.s_hat.size() ? ds.s_hat[t] : -1;
      out += "," + std::to_string(sh + 1);
    }
    out += "\n";
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  do {
    if (!std::getline(in, line)) throw Error(ErrorCode::Io, "empty dataset CSV");
  } while (line.empty() || line[0] == '#');
  const bool with_s_hat = line.find("s_hat") != std::string::npos;
  Dataset ds;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() < 4) throw Error(ErrorCode::Io, "short CSV row: " + line);
    ds.u.push_back(Vector::Constant(1, parse_double(f[1])));
    ds.y.push_back(Vector::Constant(1, parse_double(f[2])));
    ds.s_true.push_back(std::stoi(f[3]) - 1);
    if (with_s_hat && f.size() > 4) ds.s_hat.push_back(std::stoi(f[4]) - 1);
  }
  return ds;
}

}  // namespace pwadeepc
