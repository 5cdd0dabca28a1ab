#include "pwadeepc/behavior_matrices.hpp"

#include "pwadeepc/error.hpp"

#include <charconv>
#include <random>

namespace pwadeepc {

Matrix hankel(std::span<const Vector> seq, Index depth) {
  if (depth < 1 || static_cast<Index>(seq.size()) < depth) {
    throw Error(ErrorCode::TooShort, "sequence of length " + std::to_string(seq.size()) +
                                         " is shorter than depth " + std::to_string(depth));
  }
  std::vector<size_t> starts(seq.size() - static_cast<size_t>(depth) + 1);
  for (size_t c = 0; c < starts.size(); ++c) starts[c] = c;
  return windowed_hankel(seq, starts, depth);
}

Matrix windowed_hankel(std::span<const Vector> seq, std::span<const size_t> starts, Index depth) {
  const Index n = seq.empty() ? 0 : seq.front().size();
  Matrix H(n * depth, static_cast<Index>(starts.size()));
  for (size_t c = 0; c < starts.size(); ++c) {
    if (starts[c] + static_cast<size_t>(depth) > seq.size()) {
      throw Error(ErrorCode::TooShort, "window exceeds the sequence");
    }
    for (Index r = 0; r < depth; ++r) {
      H.block(r * n, static_cast<Index>(c), n, 1) = seq[starts[c] + static_cast<size_t>(r)];
    }
  }
  return H;
}

Matrix ModeBlocks::ZP() const {
  Matrix z(UP.rows() + YP.rows(), UP.cols());
  z << UP, YP;
  return z;
}

Index MosaicBlocks::total_cols() const {
  Index n = 0;
  for (const auto& m : modes) n += m.cols();
  return n;
}

std::vector<Index> MosaicBlocks::col_offsets() const {
  std::vector<Index> off{0};
  for (const auto& m : modes) off.push_back(off.back() + m.cols());
  return off;
}

namespace {

template <typename Get>
Matrix hconcat(const std::vector<ModeBlocks>& modes, Get get) {
  Index rows = modes.empty() ? 0 : get(modes.front()).rows(), cols = 0;
  for (const auto& m : modes) cols += m.cols();
  Matrix out(rows, cols);
  Index off = 0;
  for (const auto& m : modes) {
    out.middleCols(off, m.cols()) = get(m);
    off += m.cols();
  }
  return out;
}

}  // namespace

Matrix MosaicBlocks::ZP() const { return hconcat(modes, [](const ModeBlocks& m) { return m.ZP(); }); }
Matrix MosaicBlocks::UF() const { return hconcat(modes, [](const ModeBlocks& m) { return m.UF; }); }
Matrix MosaicBlocks::YF() const { return hconcat(modes, [](const ModeBlocks& m) { return m.YF; }); }

Matrix MosaicBlocks::indicator() const {
  Matrix I = Matrix::Zero(mode_count(), total_cols());
  const auto off = col_offsets();
  for (int i = 0; i < mode_count(); ++i) {
    I.block(i, off[static_cast<size_t>(i)], 1, modes[static_cast<size_t>(i)].cols()).setOnes();
  }
  return I;
}

ModeBlocks local_blocks(const LocalDataset& local, int L, int rho) {
  if (L < 1 || rho < 0) throw Error(ErrorCode::InvalidArgument, "need L >= 1 and rho >= 0");
  const size_t depth = static_cast<size_t>(L + rho);
  const auto starts = local.window_starts(depth);
  if (starts.empty()) {
    throw Error(ErrorCode::InsufficientData, "mode " + std::to_string(local.mode + 1) +
                                                 " has no window of depth " + std::to_string(depth));
  }
  const Index nu = local.u.front().size(), ny = local.y.front().size();
  const Matrix Hu = windowed_hankel(local.u, starts, static_cast<Index>(depth));
  const Matrix Hy = windowed_hankel(local.y, starts, static_cast<Index>(depth));
  ModeBlocks b;
  b.mode = local.mode;
  b.UP = Hu.topRows(nu * rho);
  b.UF = Hu.bottomRows(nu * L);
  b.YP = Hy.topRows(ny * rho);
  b.YF = Hy.bottomRows(ny * L);
  for (size_t s : starts) b.column_source.push_back(local.source.empty() ? s : local.source[s]);
  return b;
}

MosaicBlocks build_mosaic_blocks(const std::vector<LocalDataset>& locals, int L, int rho) {
  if (locals.empty()) throw Error(ErrorCode::InvalidArgument, "no local datasets");
  MosaicBlocks mb;
  mb.L = L;
  mb.rho = rho;
  for (const auto& d : locals) mb.modes.push_back(local_blocks(d, L, rho));
  mb.nu = mb.modes.front().UF.rows() / L;
  mb.ny = mb.modes.front().YF.rows() / L;
  return mb;
}

Matrix mosaic(const MosaicBlocks& blocks) {
  const Matrix ZP = blocks.ZP(), UF = blocks.UF(), YF = blocks.YF(), I = blocks.indicator();
  Matrix M(ZP.rows() + UF.rows() + YF.rows() + I.rows(), blocks.total_cols());
  M << ZP, UF, YF, I;
  return M;
}

std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  char buf[64];
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      auto res = std::to_chars(buf, buf + sizeof(buf), m(r, c));
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

Json mosaic_sidecar(const MosaicBlocks& blocks) {
  const Index up = blocks.nu * blocks.rho, yp = blocks.ny * blocks.rho;
  const Index uf = blocks.nu * blocks.L, yf = blocks.ny * blocks.L;
  Json rows = {{"U_P", {0, up}},
               {"Y_P", {up, up + yp}},
               {"U_F", {up + yp, up + yp + uf}},
               {"Y_F", {up + yp + uf, up + yp + uf + yf}},
               {"I", {up + yp + uf + yf, up + yp + uf + yf + blocks.mode_count()}}};
  Json modes = Json::array();
  const auto off = blocks.col_offsets();
  for (int i = 0; i < blocks.mode_count(); ++i) {
    const auto& m = blocks.modes[static_cast<size_t>(i)];
    modes.push_back({{"mode", m.mode + 1},
                     {"columns", {off[static_cast<size_t>(i)], off[static_cast<size_t>(i) + 1]}},
                     {"column_source", m.column_source}});
  }
  return Json{{"L", blocks.L},   {"rho", blocks.rho},          {"nu", blocks.nu},
              {"ny", blocks.ny}, {"S", blocks.mode_count()},   {"total_columns", blocks.total_cols()},
              {"row_blocks", rows}, {"modes", modes}};
}

SelectionMasks selection_masks(std::span<const int> mode_seq, int mode_count, Index nu, Index ny) {
  const Index L = static_cast<Index>(mode_seq.size());
  SelectionMasks sm;
  sm.mode_seq.assign(mode_seq.begin(), mode_seq.end());
  for (int i = 0; i < mode_count; ++i) {
    Vector m = Vector::Zero((nu + ny) * L);
    for (Index k = 0; k < L; ++k) {
      const int s = mode_seq[static_cast<size_t>(k)];
      if (s < 0 || s >= mode_count) throw Error(ErrorCode::InvalidArgument, "mode out of range");
      if (s != i) continue;
      m.segment(k * nu, nu).setOnes();
      m.segment(nu * L + k * ny, ny).setOnes();
    }
    sm.mask.push_back(std::move(m));
  }
  return sm;
}

TrajectoryBlocks trajectory_blocks(const std::vector<LocalDataset>& locals, int L) {
  TrajectoryBlocks tb;
  tb.L = L;
  for (const auto& d : locals) {
    const auto starts = d.window_starts(static_cast<size_t>(L));
    if (starts.empty()) {
      throw Error(ErrorCode::InsufficientData, "mode " + std::to_string(d.mode + 1) +
                                                   " has no window of depth " + std::to_string(L));
    }
    tb.Hu.push_back(windowed_hankel(d.u, starts, L));
    tb.Hy.push_back(windowed_hankel(d.y, starts, L));
    std::vector<size_t> src;
    for (size_t s : starts) src.push_back(d.source.empty() ? s : d.source[s]);
    tb.column_source.push_back(std::move(src));
  }
  tb.nu = tb.Hu.front().rows() / L;
  tb.ny = tb.Hy.front().rows() / L;
  return tb;
}

void restricted_system(const TrajectoryBlocks& blocks, std::span<const int> mode_seq, Matrix& A) {
  const int S = blocks.mode_count();
  const Index L = blocks.L;
  if (static_cast<Index>(mode_seq.size()) != L) throw Error(ErrorCode::DimensionMismatch, "mode sequence length differs from L");
  const auto sm = selection_masks(mode_seq, S, blocks.nu, blocks.ny);
  Index cols = 0;
  for (const auto& h : blocks.Hu) cols += h.cols();
  const Index rows_w = (blocks.nu + blocks.ny) * L;
  A = Matrix::Zero(rows_w + S, cols);
  Index off = 0;
  for (int i = 0; i < S; ++i) {
    const auto& Hu = blocks.Hu[static_cast<size_t>(i)];
    const auto& Hy = blocks.Hy[static_cast<size_t>(i)];
    const Vector& m = sm.mask[static_cast<size_t>(i)];
    A.block(0, off, Hu.rows(), Hu.cols()) = m.head(Hu.rows()).asDiagonal() * Hu;
    A.block(Hu.rows(), off, Hy.rows(), Hy.cols()) = m.tail(Hy.rows()).asDiagonal() * Hy;
    A.block(rows_w + i, off, 1, Hu.cols()).setOnes();
    off += Hu.cols();
  }
}

RestrictedResidual restricted_residual(const TrajectoryBlocks& blocks, const std::vector<Vector>& G,
                                       std::span<const int> mode_seq, const Vector& u,
                                       const Vector& y) {
  const int S = blocks.mode_count();
  if (static_cast<int>(G.size()) != S) throw Error(ErrorCode::DimensionMismatch, "one selector per mode required");
  const auto sm = selection_masks(mode_seq, S, blocks.nu, blocks.ny);
  Vector w = Vector::Zero(u.size() + y.size());
  if (w.size() != sm.mask.front().size()) throw Error(ErrorCode::DimensionMismatch, "target length differs from (nu+ny)L");
  RestrictedResidual rr;
  for (int i = 0; i < S; ++i) {
    const auto& Gi = G[static_cast<size_t>(i)];
    const auto& Hu = blocks.Hu[static_cast<size_t>(i)];
    if (Gi.size() != Hu.cols()) throw Error(ErrorCode::DimensionMismatch, "selector length differs from Hankel columns");
    Vector wi(w.size());
    wi << Hu * Gi, blocks.Hy[static_cast<size_t>(i)] * Gi;
    w += sm.mask[static_cast<size_t>(i)].cwiseProduct(wi);
    rr.sum_violation.push_back(std::abs(Gi.sum() - 1.0));
  }
  Vector target(w.size());
  target << u, y;
  rr.residual = (w - target).norm();
  return rr;
}

TrajectoryCheck check_trajectory(const TrajectoryBlocks& blocks, const PwarxModel& model,
                                 const std::vector<Vector>& u_past,
                                 const std::vector<Vector>& y_past, const std::vector<Vector>& u,
                                 const std::vector<Vector>& y, std::span<const int> mode_seq,
                                 double tol) {
  const int S = blocks.mode_count();
  const int lag = model.lag();
  if (static_cast<int>(u_past.size()) != lag || static_cast<int>(y_past.size()) != lag) {
    throw Error(ErrorCode::DimensionMismatch, "past samples must match the model lag");
  }
  Matrix A;
  restricted_system(blocks, mode_seq, A);
  const Vector uv = stack(u), yv = stack(y);
  Vector b(A.rows());
  b << uv, yv, Vector::Ones(S);
  const Vector g = min_norm_solve(A, b);

  TrajectoryCheck tc;
  Index off = 0;
  for (int i = 0; i < S; ++i) {
    const Index n = blocks.Hu[static_cast<size_t>(i)].cols();
    tc.G.push_back(g.segment(off, n));
    off += n;
  }
  const auto rr = restricted_residual(blocks, tc.G, mode_seq, uv, yv);
  tc.residual = rr.residual;
  for (double v : rr.sum_violation) tc.max_sum_violation = std::max(tc.max_sum_violation, v);
  tc.feasible = tc.residual < tol && tc.max_sum_violation < tol;

  // Re-evaluate the modes on the reconstructed window.
  const Index L = blocks.L, nu = blocks.nu, ny = blocks.ny;
  const Vector w = A.topRows((nu + ny) * L) * g;
  std::vector<Vector> uu(u_past), yy(y_past);
  for (Index k = 0; k < L; ++k) {
    uu.push_back(w.segment(k * nu, nu));
    yy.push_back(w.segment(nu * L + k * ny, ny));
  }
  tc.mode_consistent = true;
  for (Index k = 0; k < L; ++k) {
    const size_t t = static_cast<size_t>(lag + k);
    std::span<const Vector> yh(yy.data() + t - static_cast<size_t>(lag), static_cast<size_t>(lag));
    std::span<const Vector> uh(uu.data() + t - static_cast<size_t>(lag), static_cast<size_t>(lag) + 1);
    const int s = pwarx_active_mode(model, yh, uh);
    tc.reconstructed_modes.push_back(s);
    tc.mode_consistent = tc.mode_consistent && s == mode_seq[static_cast<size_t>(k)];
  }
  return tc;
}

FundamentalLemmaReport verify_fundamental_lemma(const PwaStateSpace& sys, const PwarxModel& model,
                                                const TrajectoryBlocks& blocks, int trials,
                                                std::uint64_t seed, const TrialSettings& ts) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double r) { return (static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * r; };
  const int lag = model.lag();
  const size_t L = static_cast<size_t>(blocks.L);
  FundamentalLemmaReport rep;
  rep.trials = trials;
  for (int k = 0; k < trials; ++k) {
    Vector x0(sys.nx());
    for (Index i = 0; i < x0.size(); ++i) x0(i) = uniform(ts.x0_range);
    std::vector<Vector> us(static_cast<size_t>(lag) + L, Vector(sys.nu()));
    for (auto& u : us)
      for (Index i = 0; i < u.size(); ++i) u(i) = uniform(ts.u_range);
    const Trajectory tr = simulate_ss(sys, x0, us);
    const auto labels = pwarx_labels(model, tr.u, tr.y);
    const auto lg = static_cast<std::ptrdiff_t>(lag);
    const std::vector<Vector> up(tr.u.begin(), tr.u.begin() + lg), yp(tr.y.begin(), tr.y.begin() + lg);
    const std::vector<Vector> uf(tr.u.begin() + lg, tr.u.end()), yf(tr.y.begin() + lg, tr.y.end());
    const std::vector<int> modes(labels.begin() + lg, labels.end());
    const auto tc = check_trajectory(blocks, model, up, yp, uf, yf, modes, ts.tol);
    rep.feasible += tc.feasible;
    rep.mode_consistent += tc.mode_consistent;
    rep.max_residual = std::max(rep.max_residual, tc.residual);
    rep.max_sum_violation = std::max(rep.max_sum_violation, tc.max_sum_violation);
  }
  rep.success_rate = trials > 0 ? static_cast<double>(rep.feasible) / trials : 0.0;
  return rep;
}

SubspacePredictor subspace_predictor(const MosaicBlocks& blocks) {
  const Matrix ZP = blocks.ZP(), UF = blocks.UF(), I = blocks.indicator();
  Matrix M(ZP.rows() + UF.rows() + I.rows(), blocks.total_cols());
  M << ZP, UF, I;
  const Matrix full = blocks.YF() * pseudo_inverse(M);
  const Index lead = ZP.rows() + UF.rows();
  SubspacePredictor sp;
  sp.Phi.resize(full.rows(), lead + 1);
  sp.Phi.leftCols(lead) = full.leftCols(lead);
  sp.Phi.col(lead) = full.rightCols(I.rows()).rowwise().sum();
  sp.rank = numerical_rank(M);
  sp.full_row_rank = sp.rank == M.rows();
  return sp;
}

Matrix true_multistep_map(const PwaStateSpace& sys, std::span<const int> mode_seq, int rho, int L) {
  if (static_cast<int>(mode_seq.size()) != rho + L) {
    throw Error(ErrorCode::DimensionMismatch, "mode sequence must cover rho + L steps");
  }
  const Index nu = sys.nu(), ny = sys.ny();
  const MultistepMap m = multistep_map(sys, mode_seq);
  const Index pr = ny * rho, fr = ny * L;
  const Matrix Op = m.O.topRows(pr), Of = m.O.bottomRows(fr);
  const Matrix Tpp = m.T.topLeftCorner(pr, nu * rho);
  const Matrix Tfp = m.T.block(pr, 0, fr, nu * rho);
  const Matrix Tff = m.T.block(pr, nu * rho, fr, nu * L);
  const Matrix K = Of * pseudo_inverse(Op);
  Matrix out(fr, nu * rho + ny * rho + nu * L + 1);
  out.leftCols(nu * rho) = Tfp - K * Tpp;
  out.middleCols(nu * rho, pr) = K;
  out.middleCols(nu * rho + pr, nu * L) = Tff;
  out.col(out.cols() - 1) = m.c.tail(fr) - K * m.c.head(pr);
  return out;
}

}  // namespace pwadeepc
