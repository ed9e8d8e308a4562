#include "tierfem/sparse.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>

#include "tierfem/errors.hpp"
#include "tierfem/parallel.hpp"

namespace tierfem {

NewmarkCoeffs NewmarkCoeffs::make(double dt) {
  if (!(dt > 0)) throw InputError("time step must be positive");
  return {dt, 4.0 / (dt * dt), 2.0 / dt, 4.0 / dt};
}

OperatorScales OperatorScales::make(const NewmarkCoeffs& nm, const RayleighCoeffs& r) {
  return {nm.c4dt2 + nm.c2dt * r.alpha, 1.0 + nm.c2dt * r.beta, nm.c2dt};
}

namespace {

double now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Block3 invert3(const Block3& a) {
  const double c00 = a[4] * a[8] - a[5] * a[7];
  const double c01 = a[5] * a[6] - a[3] * a[8];
  const double c02 = a[3] * a[7] - a[4] * a[6];
  const double det = a[0] * c00 + a[1] * c01 + a[2] * c02;
  if (!(std::abs(det) > 0) || !std::isfinite(det)) throw SolverError("singular diagonal block");
  const double id = 1.0 / det;
  return {c00 * id,
          (a[2] * a[7] - a[1] * a[8]) * id,
          (a[1] * a[5] - a[2] * a[4]) * id,
          c01 * id,
          (a[0] * a[8] - a[2] * a[6]) * id,
          (a[2] * a[3] - a[0] * a[5]) * id,
          c02 * id,
          (a[1] * a[6] - a[0] * a[7]) * id,
          (a[0] * a[4] - a[1] * a[3]) * id};
}

std::vector<std::vector<std::uint32_t>> nodeAdjacency(std::size_t nNodes, const std::vector<Tet10>& tets,
                                                      int nodesPerTet) {
  std::vector<std::vector<std::uint32_t>> adj(nNodes);
  for (const auto& t : tets)
    for (int a = 0; a < nodesPerTet; ++a)
      for (int b = 0; b < nodesPerTet; ++b) adj[t[a]].push_back(t[b]);
  for (auto& row : adj) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return adj;
}

BlockCrsMatrix patternFromAdjacency(const std::vector<std::vector<std::uint32_t>>& adj) {
  BlockCrsMatrix A;
  A.nRows = adj.size();
  A.rowPtr.assign(adj.size() + 1, 0);
  for (std::size_t i = 0; i < adj.size(); ++i) A.rowPtr[i + 1] = A.rowPtr[i] + static_cast<std::uint32_t>(adj[i].size());
  A.colIdx.reserve(A.rowPtr.back());
  for (const auto& row : adj) A.colIdx.insert(A.colIdx.end(), row.begin(), row.end());
  A.values.assign(A.colIdx.size() * 9, 0.0);
  return A;
}

std::size_t findOrThrow(const BlockCrsMatrix& A, std::uint32_t r, std::uint32_t c) {
  const auto p = A.find(r, c);
  if (p < 0) throw InputError("block pattern does not contain the mesh coupling");
  return static_cast<std::size_t>(p);
}

}  // namespace

// ---------------------------------------------------------------- block CRS

std::ptrdiff_t BlockCrsMatrix::find(std::uint32_t row, std::uint32_t col) const {
  if (row >= nRows) return -1;
  const auto b = colIdx.begin() + rowPtr[row];
  const auto e = colIdx.begin() + rowPtr[row + 1];
  const auto it = std::lower_bound(b, e, col);
  if (it == e || *it != col) return -1;
  return it - colIdx.begin();
}

void BlockCrsMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  parallelFor(nRows, [&](std::size_t i) {
    double y0 = 0, y1 = 0, y2 = 0;
    for (std::uint32_t p = rowPtr[i]; p < rowPtr[i + 1]; ++p) {
      const double* v = &values[9 * p];
      const double* xj = &x[3 * colIdx[p]];
      y0 += v[0] * xj[0] + v[1] * xj[1] + v[2] * xj[2];
      y1 += v[3] * xj[0] + v[4] * xj[1] + v[5] * xj[2];
      y2 += v[6] * xj[0] + v[7] * xj[1] + v[8] * xj[2];
    }
    y[3 * i] = y0;
    y[3 * i + 1] = y1;
    y[3 * i + 2] = y2;
  }, 256);
}

BlockCrsMatrix blockCrsPattern(const Mesh& mesh) {
  return patternFromAdjacency(nodeAdjacency(mesh.nodes.size(), mesh.tets, 10));
}

BlockCrsMatrix assembleBlockCrs(const Model& model, std::span<const ElementTangents> D, const OperatorScales& s) {
  BlockCrsMatrix A = blockCrsPattern(model.mesh);
  updateBlockCrsValues(A, model, D, s);
  return A;
}

void updateBlockCrsValues(BlockCrsMatrix& A, const Model& model, std::span<const ElementTangents> D,
                          const OperatorScales& s) {
  if (A.nRows != model.nNodes() || A.rowPtr.size() != model.nNodes() + 1 || A.values.size() != 9 * A.nnzBlocks())
    throw InputError("block CRS pattern does not match the mesh");
  if (D.size() != model.nElements()) throw InputError("tangent count does not match the mesh");
  std::fill(A.values.begin(), A.values.end(), 0.0);
  // Elements of one color touch disjoint rows, so the sums are order-stable.
  for (const auto& color : model.colors) {
    parallelFor(color.size(), [&](std::size_t k) {
      const std::uint32_t e = color[k];
      const auto& kd = model.kernels[e];
      const Mat30 K = elementStiffness(kd, D[e]);
      for (int a = 0; a < 10; ++a)
        for (int b = 0; b < 10; ++b) {
          double* blk = &A.values[9 * findOrThrow(A, kd.nodes[a], kd.nodes[b])];
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) blk[3 * r + c] += s.stiff * K[(3 * a + r) * 30 + 3 * b + c];
        }
    }, 16);
  }
  for (std::uint32_t i = 0; i < model.nNodes(); ++i) {
    double* blk = &A.values[9 * findOrThrow(A, i, i)];
    for (int c = 0; c < 3; ++c) blk[4 * c] += s.mass * model.mass[3 * i + c] + s.dash * model.dashpot[3 * i + c];
  }
}

std::array<Block3, 10> elementDiagonalBlocks(const ElementKernelData& kd, const ElementTangents& D) {
  std::array<Block3, 10> out{};
  const Mat6 Dc = centerTangent(D);
  for (int j = 0; j < kQuadPoints; ++j) {
    const Mat6& Dj = j == kCenterPoint ? Dc : D[j];
    const double w = kd.weight[j];
    for (int a = 0; a < 10; ++a) {
      const auto& g = kd.grad[j][a];
      // B_a is 6x3.
      const double B[6][3] = {{g[0], 0, 0}, {0, g[1], 0}, {0, 0, g[2]}, {g[1], g[0], 0}, {0, g[2], g[1]}, {g[2], 0, g[0]}};
      double DB[6][3] = {};
      for (int p = 0; p < 6; ++p)
        for (int q = 0; q < 6; ++q)
          for (int c = 0; c < 3; ++c) DB[p][c] += Dj[6 * p + q] * B[q][c];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          double v = 0;
          for (int p = 0; p < 6; ++p) v += B[p][r] * DB[p][c];
          out[a][3 * r + c] += w * v;
        }
    }
  }
  return out;
}

// ---------------------------------------------------------------- block Jacobi

BlockJacobi::BlockJacobi(const std::vector<Block3>& diagBlocks, bool singlePrecision) {
  if (singlePrecision) {
    inv32_.resize(diagBlocks.size());
    for (std::size_t i = 0; i < diagBlocks.size(); ++i) {
      const Block3 inv = invert3(diagBlocks[i]);
      for (int k = 0; k < 9; ++k) inv32_[i][k] = static_cast<float>(inv[k]);
    }
  } else {
    inv64_.resize(diagBlocks.size());
    for (std::size_t i = 0; i < diagBlocks.size(); ++i) inv64_[i] = invert3(diagBlocks[i]);
  }
}

BlockJacobi BlockJacobi::fromMatrix(const BlockCrsMatrix& A, bool singlePrecision) {
  std::vector<Block3> diag(A.nRows);
  for (std::uint32_t i = 0; i < A.nRows; ++i) {
    const auto p = A.find(i, i);
    if (p < 0) throw InputError("matrix row without diagonal block");
    std::copy_n(&A.values[9 * p], 9, diag[i].begin());
  }
  return BlockJacobi(diag, singlePrecision);
}

std::array<double, 9> BlockJacobi::inverse(std::size_t node) const {
  if (!inv64_.empty()) return inv64_[node];
  std::array<double, 9> out{};
  for (int k = 0; k < 9; ++k) out[k] = inv32_[node][k];
  return out;
}

void BlockJacobi::apply(std::span<const double> r, std::span<double> z) const {
  if (!inv64_.empty()) {
    parallelFor(inv64_.size(), [&](std::size_t i) {
      const auto& m = inv64_[i];
      const double* ri = &r[3 * i];
      z[3 * i] = m[0] * ri[0] + m[1] * ri[1] + m[2] * ri[2];
      z[3 * i + 1] = m[3] * ri[0] + m[4] * ri[1] + m[5] * ri[2];
      z[3 * i + 2] = m[6] * ri[0] + m[7] * ri[1] + m[8] * ri[2];
    }, 1024);
    return;
  }
  parallelFor(inv32_.size(), [&](std::size_t i) {
    const auto& m = inv32_[i];
    const float r0 = static_cast<float>(r[3 * i]), r1 = static_cast<float>(r[3 * i + 1]),
                r2 = static_cast<float>(r[3 * i + 2]);
    z[3 * i] = m[0] * r0 + m[1] * r1 + m[2] * r2;
    z[3 * i + 1] = m[3] * r0 + m[4] * r1 + m[5] * r2;
    z[3 * i + 2] = m[6] * r0 + m[7] * r1 + m[8] * r2;
  }, 1024);
}

// ---------------------------------------------------------------- CG

double dot(std::span<const double> a, std::span<const double> b) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

CgRunner::CgRunner(const LinearOp& M, std::span<const double> b, std::span<double> x, const CgOptions& opt)
    : M_(M), b_(b), x_(x), opt_(opt) {
  if (b.size() != x.size()) throw InputError("CG vector sizes differ");
  const std::size_t n = b.size();
  t0_ = now();
  maxIt_ = opt.maxIterations > 0 ? opt.maxIterations
                                 : std::max(1, static_cast<int>(std::ceil(10.0 * std::sqrt(static_cast<double>(n)))));
  bnorm_ = norm2(b);
  if (!std::isfinite(bnorm_)) throw SolverError("non-finite right-hand side");
  if (bnorm_ == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    done_ = true;
    stats_.seconds = now() - t0_;
    return;
  }
  r_.resize(n);
  z_.resize(n);
  p_.resize(n);
  if (opt.flexible) rOld_.resize(n);
}

std::span<const double> CgRunner::request() const {
  if (!started_) return {x_.data(), x_.size()};
  return p_;
}

void CgRunner::applyPrecond() {
  M_(r_, z_);
  ++stats_.precondApplications;
}

bool CgRunner::consume(std::span<const double> Av) {
  if (done_) return true;
  ++stats_.matvecs;
  const std::size_t n = r_.size();
  if (!started_) {
    started_ = true;
    for (std::size_t i = 0; i < n; ++i) r_[i] = b_[i] - Av[i];
    stats_.relResidual = norm2(r_) / bnorm_;
    if (stats_.relResidual <= opt_.tol) {
      done_ = true;
      stats_.seconds = now() - t0_;
      return true;
    }
    applyPrecond();
    std::copy(z_.begin(), z_.end(), p_.begin());
    rz_ = dot(r_, z_);
    if (!(rz_ > 0)) throw SolverError("preconditioner is not positive definite");
    return false;
  }
  const double pq = dot(p_, Av);
  if (!(pq > 0)) throw SolverError("CG breakdown: matrix is not positive definite (p^T A p <= 0)");
  const double alpha = rz_ / pq;
  if (opt_.flexible) std::copy(r_.begin(), r_.end(), rOld_.begin());
  for (std::size_t i = 0; i < n; ++i) {
    x_[i] += alpha * p_[i];
    r_[i] -= alpha * Av[i];
  }
  ++stats_.iterations;
  stats_.relResidual = norm2(r_) / bnorm_;
  if (!std::isfinite(stats_.relResidual)) throw SolverError("CG produced non-finite residual");
  if (stats_.relResidual <= opt_.tol) {
    done_ = true;
    stats_.seconds = now() - t0_;
    return true;
  }
  if (stats_.iterations >= maxIt_)
    throw SolverError("CG did not reach tolerance within " + std::to_string(maxIt_) + " iterations (residual " +
                      std::to_string(stats_.relResidual) + ")");
  applyPrecond();
  double beta;
  const double rzNew = dot(r_, z_);
  if (opt_.flexible) {
    double num = 0;
    for (std::size_t i = 0; i < n; ++i) num += z_[i] * (r_[i] - rOld_[i]);
    beta = num / rz_;
  } else {
    beta = rzNew / rz_;
  }
  rz_ = rzNew;
  if (!(rz_ > 0)) throw SolverError("preconditioner is not positive definite");
  for (std::size_t i = 0; i < n; ++i) p_[i] = z_[i] + beta * p_[i];
  return false;
}

SolveStats pcg(const LinearOp& A, const LinearOp& M, std::span<const double> b, std::span<double> x,
               const CgOptions& opt) {
  CgRunner run(M, b, x, opt);
  std::vector<double> Av(b.size());
  while (!run.done()) {
    A(run.request(), Av);
    run.consume(Av);
  }
  return run.stats();
}

SolveStats crsPcg(const BlockCrsMatrix& A, const BlockJacobi& P, std::span<const double> b, std::span<double> x,
                  const CgOptions& opt) {
  if (b.size() != 3 * A.nRows) throw InputError("right-hand side size does not match the matrix");
  return pcg([&](std::span<const double> v, std::span<double> y) { A.multiply(v, y); },
             [&](std::span<const double> r, std::span<double> z) { P.apply(r, z); }, b, x, opt);
}

// ---------------------------------------------------------------- EBE

EbeOperator::EbeOperator(const Model& model, bool atomicScatter) : model_(model), atomic_(atomicScatter) {}

namespace {

template <typename Add>
void scatterLocal(const ElementKernelData& kd, const std::array<double, 30>& f, double scale, Add add) {
  for (int a = 0; a < 10; ++a)
    for (int c = 0; c < 3; ++c) add(3 * kd.nodes[a] + c, scale * f[3 * a + c]);
}

std::array<double, 30> gather(const ElementKernelData& kd, std::span<const double> x) {
  std::array<double, 30> u;
  for (int a = 0; a < 10; ++a)
    for (int c = 0; c < 3; ++c) u[3 * a + c] = x[3 * kd.nodes[a] + c];
  return u;
}

inline void atomicAdd(double& target, double v) { std::atomic_ref<double>(target).fetch_add(v, std::memory_order_relaxed); }

}  // namespace

void EbeOperator::scatterStiffness(std::span<const ElementTangents> D, double scale, std::span<const double> x,
                                   std::span<double> y) const {
  if (D.size() != model_.nElements()) throw InputError("tangent count does not match the mesh");
  auto work = [&](std::uint32_t e, auto add) {
    const auto& kd = model_.kernels[e];
    const auto u = gather(kd, x);
    const auto f = elementProduct(kd, D[e], u);
    scatterLocal(kd, f, scale, add);
  };
  if (atomic_) {
    parallelFor(model_.nElements(), [&](std::size_t e) {
      work(static_cast<std::uint32_t>(e), [&](std::size_t i, double v) { atomicAdd(y[i], v); });
    }, 32);
    return;
  }
  for (const auto& color : model_.colors)
    parallelFor(color.size(), [&](std::size_t k) {
      work(color[k], [&](std::size_t i, double v) { y[i] += v; });
    }, 32);
}

void EbeOperator::apply(std::span<const ElementTangents> D, const OperatorScales& s, std::span<const double> x,
                        std::span<double> y) const {
  const auto& m = model_.mass;
  const auto& cb = model_.dashpot;
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = s.mass * m[i] * x[i] + s.dash * cb[i] * x[i];
  scatterStiffness(D, s.stiff, x, y);
}

void EbeOperator::stiffness(std::span<const ElementTangents> D, std::span<const double> x,
                            std::span<double> y) const {
  std::fill(y.begin(), y.end(), 0.0);
  scatterStiffness(D, 1.0, x, y);
}

void EbeOperator::applyBatched(std::span<const ElementTangents> D1, std::span<const ElementTangents> D2,
                               const OperatorScales& s1, const OperatorScales& s2, std::span<const double> x1,
                               std::span<const double> x2, std::span<double> y1, std::span<double> y2) const {
  if (D1.size() != model_.nElements() || D2.size() != model_.nElements() || x1.size() != x2.size())
    throw InputError("batched problem sets do not share the mesh topology");
  const auto& m = model_.mass;
  const auto& cb = model_.dashpot;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    y1[i] = s1.mass * m[i] * x1[i] + s1.dash * cb[i] * x1[i];
    y2[i] = s2.mass * m[i] * x2[i] + s2.dash * cb[i] * x2[i];
  }
  auto work = [&](std::uint32_t e, auto add) {
    const auto& kd = model_.kernels[e];
    const auto u1 = gather(kd, x1);
    const auto u2 = gather(kd, x2);
    std::array<double, 30> f1, f2;
    elementProduct2(kd, D1[e], D2[e], u1, u2, f1, f2);
    scatterLocal(kd, f1, s1.stiff, [&](std::size_t i, double v) { add(y1, i, v); });
    scatterLocal(kd, f2, s2.stiff, [&](std::size_t i, double v) { add(y2, i, v); });
  };
  if (atomic_) {
    parallelFor(model_.nElements(), [&](std::size_t e) {
      work(static_cast<std::uint32_t>(e), [](std::span<double> y, std::size_t i, double v) { atomicAdd(y[i], v); });
    }, 32);
    return;
  }
  for (const auto& color : model_.colors)
    parallelFor(color.size(), [&](std::size_t k) {
      work(color[k], [](std::span<double> y, std::size_t i, double v) { y[i] += v; });
    }, 32);
}

std::vector<Block3> EbeOperator::diagonalBlocks(std::span<const ElementTangents> D, const OperatorScales& s) const {
  std::vector<Block3> out(model_.nNodes(), Block3{});
  for (const auto& color : model_.colors)
    parallelFor(color.size(), [&](std::size_t k) {
      const std::uint32_t e = color[k];
      const auto blocks = elementDiagonalBlocks(model_.kernels[e], D[e]);
      for (int a = 0; a < 10; ++a)
        for (int q = 0; q < 9; ++q) out[model_.kernels[e].nodes[a]][q] += s.stiff * blocks[a][q];
    }, 32);
  for (std::size_t i = 0; i < out.size(); ++i)
    for (int c = 0; c < 3; ++c)
      out[i][4 * c] += s.mass * model_.mass[3 * i + c] + s.dash * model_.dashpot[3 * i + c];
  return out;
}

SolveStats ebeIpcg(const EbeOperator& op, std::span<const ElementTangents> D, const OperatorScales& s,
                   const LinearOp& precond, std::span<const double> b, std::span<double> x, const CgOptions& opt) {
  return pcg([&](std::span<const double> v, std::span<double> y) { op.apply(D, s, v, y); }, precond, b, x, opt);
}

std::array<SolveStats, 2> ebeIpcgBatched(const EbeOperator& op, std::span<const ElementTangents> D1,
                                         std::span<const ElementTangents> D2, const OperatorScales& s1,
                                         const OperatorScales& s2, const LinearOp& P1, const LinearOp& P2,
                                         std::span<const double> b1, std::span<const double> b2,
                                         std::span<double> x1, std::span<double> x2, const CgOptions& opt) {
  CgRunner r1(P1, b1, x1, opt), r2(P2, b2, x2, opt);
  std::vector<double> y1(b1.size()), y2(b2.size());
  while (!r1.done() || !r2.done()) {
    if (!r1.done() && !r2.done()) {
      op.applyBatched(D1, D2, s1, s2, r1.request(), r2.request(), y1, y2);
      r1.consume(y1);
      r2.consume(y2);
    } else if (!r1.done()) {
      op.apply(D1, s1, r1.request(), y1);
      r1.consume(y1);
    } else {
      op.apply(D2, s2, r2.request(), y2);
      r2.consume(y2);
    }
  }
  return {r1.stats(), r2.stats()};
}

// ---------------------------------------------------------------- two-level

TwoLevelPrecond::TwoLevelPrecond(const Model& model, TwoLevelOptions opt) : model_(model), opt_(opt) {
  constexpr std::uint32_t kNone = 0xffffffffu;
  const std::size_t nn = model.nNodes();
  fineToCoarse_.assign(nn, kNone);
  for (const auto& t : model.mesh.tets)
    for (int a = 0; a < 4; ++a) fineToCoarse_[t[a]] = 0;
  for (std::uint32_t i = 0; i < nn; ++i)
    if (fineToCoarse_[i] == 0) {
      fineToCoarse_[i] = static_cast<std::uint32_t>(coarseOf_.size());
      coarseOf_.push_back(i);
    }
  parents_.assign(nn, {kNone, kNone});
  for (std::uint32_t i = 0; i < nn; ++i)
    if (fineToCoarse_[i] != kNone) parents_[i] = {fineToCoarse_[i], fineToCoarse_[i]};
  for (const auto& t : model.mesh.tets)
    for (std::size_t m = 0; m < kTetEdges.size(); ++m)
      parents_[t[4 + m]] = {fineToCoarse_[t[kTetEdges[m][0]]], fineToCoarse_[t[kTetEdges[m][1]]]};
  for (const auto& p : parents_)
    if (p[0] == kNone) throw InputError("mesh node is neither a corner nor a midside node");

  std::vector<Tet10> coarseTets;
  coarseTets.reserve(model.nElements());
  for (const auto& t : model.mesh.tets) {
    Tet10 c{};
    for (int a = 0; a < 4; ++a) c[a] = fineToCoarse_[t[a]];
    coarseTets.push_back(c);
  }
  coarse64_ = patternFromAdjacency(nodeAdjacency(coarseOf_.size(), coarseTets, 4));
}

void TwoLevelPrecond::inject(std::span<const double> fine, std::span<double> coarse) const {
  for (std::size_t c = 0; c < coarseOf_.size(); ++c)
    for (int d = 0; d < 3; ++d) coarse[3 * c + d] = fine[3 * coarseOf_[c] + d];
}

void TwoLevelPrecond::prolong(std::span<const double> coarse, std::span<double> fine) const {
  for (std::size_t i = 0; i < parents_.size(); ++i) {
    const auto [a, b] = parents_[i];
    for (int d = 0; d < 3; ++d)
      fine[3 * i + d] = a == b ? coarse[3 * a + d] : 0.5 * (coarse[3 * a + d] + coarse[3 * b + d]);
  }
}

void TwoLevelPrecond::restrictTransposed(std::span<const double> fine, std::span<double> coarse) const {
  std::fill(coarse.begin(), coarse.end(), 0.0);
  for (std::size_t i = 0; i < parents_.size(); ++i) {
    const auto [a, b] = parents_[i];
    for (int d = 0; d < 3; ++d) {
      if (a == b) {
        coarse[3 * a + d] += fine[3 * i + d];
      } else {
        coarse[3 * a + d] += 0.5 * fine[3 * i + d];
        coarse[3 * b + d] += 0.5 * fine[3 * i + d];
      }
    }
  }
}

void TwoLevelPrecond::refresh(const EbeOperator& op, std::span<const ElementTangents> D, const OperatorScales& s) {
  op_ = &op;
  D_ = D;
  s_ = s;
  smoother_ = BlockJacobi(op.diagonalBlocks(D, s), true);

  BlockCrsMatrix& Ac = coarse64_;
  std::fill(Ac.values.begin(), Ac.values.end(), 0.0);
  // Stiffness: linear tetrahedra on the corner nodes with the element's mean tangent.
  for (std::size_t e = 0; e < model_.nElements(); ++e) {
    const auto [gL, vol] = barycentricGradients(model_.mesh, e);
    const Mat6 Dc = centerTangent(D[e]);
    const Tet10& t = model_.mesh.tets[e];
    double DB[4][6][3] = {};
    double B[4][6][3] = {};
    for (int a = 0; a < 4; ++a) {
      const auto& g = gL[a];
      const double Ba[6][3] = {{g[0], 0, 0}, {0, g[1], 0}, {0, 0, g[2]}, {g[1], g[0], 0}, {0, g[2], g[1]}, {g[2], 0, g[0]}};
      for (int p = 0; p < 6; ++p)
        for (int c = 0; c < 3; ++c) B[a][p][c] = Ba[p][c];
      for (int p = 0; p < 6; ++p)
        for (int q = 0; q < 6; ++q)
          for (int c = 0; c < 3; ++c) DB[a][p][c] += Dc[6 * p + q] * Ba[q][c];
    }
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        double* blk = &Ac.values[9 * findOrThrow(Ac, fineToCoarse_[t[a]], fineToCoarse_[t[b]])];
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) {
            double v = 0;
            for (int p = 0; p < 6; ++p) v += B[a][p][r] * DB[b][p][c];
            blk[3 * r + c] += s.stiff * vol * v;
          }
      }
  }
  // Diagonal mass and dashpot terms: exact Galerkin projection P^T diag P.
  for (std::size_t i = 0; i < parents_.size(); ++i) {
    const auto [a, b] = parents_[i];
    for (int d = 0; d < 3; ++d) {
      const double v = s.mass * model_.mass[3 * i + d] + s.dash * model_.dashpot[3 * i + d];
      if (a == b) {
        Ac.values[9 * findOrThrow(Ac, a, a) + 4 * d] += v;
      } else {
        const double q = 0.25 * v;
        Ac.values[9 * findOrThrow(Ac, a, a) + 4 * d] += q;
        Ac.values[9 * findOrThrow(Ac, b, b) + 4 * d] += q;
        Ac.values[9 * findOrThrow(Ac, a, b) + 4 * d] += q;
        Ac.values[9 * findOrThrow(Ac, b, a) + 4 * d] += q;
      }
    }
  }
  coarseValues_.assign(Ac.values.begin(), Ac.values.end());
  coarseDiagInv_.resize(Ac.nRows);
  for (std::uint32_t i = 0; i < Ac.nRows; ++i) {
    Block3 blk;
    std::copy_n(&Ac.values[9 * Ac.find(i, i)], 9, blk.begin());
    const Block3 inv = invert3(blk);
    for (int k = 0; k < 9; ++k) coarseDiagInv_[i][k] = static_cast<float>(inv[k]);
  }
}

void TwoLevelPrecond::coarseMultiply(std::span<const float> x, std::span<float> y) const {
  const BlockCrsMatrix& A = coarse64_;
  for (std::size_t i = 0; i < A.nRows; ++i) {
    float y0 = 0, y1 = 0, y2 = 0;
    for (std::uint32_t p = A.rowPtr[i]; p < A.rowPtr[i + 1]; ++p) {
      const float* v = &coarseValues_[9 * p];
      const float* xj = &x[3 * A.colIdx[p]];
      y0 += v[0] * xj[0] + v[1] * xj[1] + v[2] * xj[2];
      y1 += v[3] * xj[0] + v[4] * xj[1] + v[5] * xj[2];
      y2 += v[6] * xj[0] + v[7] * xj[1] + v[8] * xj[2];
    }
    y[3 * i] = y0;
    y[3 * i + 1] = y1;
    y[3 * i + 2] = y2;
  }
}

void TwoLevelPrecond::coarseSolve(std::span<const float> rhs, std::span<float> x) const {
  const std::size_t n = rhs.size();
  auto fdot = [](std::span<const float> a, std::span<const float> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
  };
  auto precond = [&](std::span<const float> r, std::span<float> z) {
    for (std::size_t i = 0; i < coarseDiagInv_.size(); ++i) {
      const auto& m = coarseDiagInv_[i];
      z[3 * i] = m[0] * r[3 * i] + m[1] * r[3 * i + 1] + m[2] * r[3 * i + 2];
      z[3 * i + 1] = m[3] * r[3 * i] + m[4] * r[3 * i + 1] + m[5] * r[3 * i + 2];
      z[3 * i + 2] = m[6] * r[3 * i] + m[7] * r[3 * i + 1] + m[8] * r[3 * i + 2];
    }
  };
  std::fill(x.begin(), x.end(), 0.0f);
  std::vector<float> r(rhs.begin(), rhs.end()), z(n), p(n), q(n);
  const double bnorm = std::sqrt(fdot(r, r));
  lastCoarseIts_ = 0;
  if (bnorm == 0.0) return;
  precond(r, z);
  p = z;
  double rz = fdot(r, z);
  for (int it = 0; it < opt_.coarseMaxIterations; ++it) {
    coarseMultiply(p, q);
    const double pq = fdot(p, q);
    if (!(pq > 0) || !(rz > 0)) throw SolverError("coarse-level solve broke down in the two-level preconditioner");
    const float alpha = static_cast<float>(rz / pq);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    lastCoarseIts_ = it + 1;
    if (std::sqrt(fdot(r, r)) <= opt_.coarseTol * bnorm) return;
    precond(r, z);
    const double rzNew = fdot(r, z);
    const float beta = static_cast<float>(rzNew / rz);
    rz = rzNew;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
}

void TwoLevelPrecond::apply(std::span<const double> r, std::span<double> z) const {
  if (!op_) throw SolverError("two-level preconditioner used before refresh");
  const std::size_t n = r.size();
  const double w = opt_.smootherWeight;
  std::vector<double> t(n), res(n), fineCorr(n);
  // Pre-smoothing from zero.
  smoother_.apply(r, z);
  for (auto& v : z) v *= w;
  op_->apply(D_, s_, z, t);
  for (std::size_t i = 0; i < n; ++i) res[i] = r[i] - t[i];
  // Coarse correction.
  std::vector<double> rc(3 * coarseOf_.size()), ec(rc.size());
  restrictTransposed(res, rc);
  std::vector<float> rcf(rc.begin(), rc.end()), ecf(rc.size());
  coarseSolve(rcf, ecf);
  std::copy(ecf.begin(), ecf.end(), ec.begin());
  prolong(ec, fineCorr);
  for (std::size_t i = 0; i < n; ++i) z[i] += fineCorr[i];
  // Post-smoothing.
  op_->apply(D_, s_, z, t);
  for (std::size_t i = 0; i < n; ++i) res[i] = r[i] - t[i];
  smoother_.apply(res, t);
  for (std::size_t i = 0; i < n; ++i) z[i] += w * t[i];
}

}  // namespace tierfem
