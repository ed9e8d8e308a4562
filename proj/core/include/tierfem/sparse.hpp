#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "coeffs.hpp"
#include "element.hpp"
#include "model.hpp"

namespace tierfem {

using Block3 = std::array<double, 9>;

/// Compressed rows of 3x3 node blocks.
struct BlockCrsMatrix {
  std::size_t nRows = 0;
  std::vector<std::uint32_t> rowPtr;
  std::vector<std::uint32_t> colIdx;
  std::vector<double> values;  // 9 per block, row-major

  std::size_t nnzBlocks() const { return colIdx.size(); }
  /// Values plus the two index arrays.
  std::size_t storageBytes() const {
    return nnzBlocks() * 72 + rowPtr.size() * sizeof(std::uint32_t) + colIdx.size() * sizeof(std::uint32_t);
  }
  /// Position of block (row, col), or -1.
  std::ptrdiff_t find(std::uint32_t row, std::uint32_t col) const;
  void multiply(std::span<const double> x, std::span<double> y) const;
};

/// Node adjacency of the mesh with zero values.
BlockCrsMatrix blockCrsPattern(const Mesh& mesh);

BlockCrsMatrix assembleBlockCrs(const Model& model, std::span<const ElementTangents> D, const OperatorScales& s);
/// Refreshes values in place; throws InputError if the pattern does not fit the mesh.
void updateBlockCrsValues(BlockCrsMatrix& A, const Model& model, std::span<const ElementTangents> D,
                          const OperatorScales& s);

/// Diagonal 3x3 block of K_e for each of the 10 element nodes.
std::array<Block3, 10> elementDiagonalBlocks(const ElementKernelData& kd, const ElementTangents& D);

using LinearOp = std::function<void(std::span<const double>, std::span<double>)>;

class BlockJacobi {
 public:
  BlockJacobi() = default;
  /// Inverts each diagonal block; stored in float unless singlePrecision is false.
  BlockJacobi(const std::vector<Block3>& diagBlocks, bool singlePrecision = true);
  static BlockJacobi fromMatrix(const BlockCrsMatrix& A, bool singlePrecision = true);

  void apply(std::span<const double> r, std::span<double> z) const;
  std::size_t blocks() const { return inv64_.empty() ? inv32_.size() : inv64_.size(); }
  bool singlePrecision() const { return inv64_.empty(); }
  std::array<double, 9> inverse(std::size_t node) const;

 private:
  std::vector<std::array<float, 9>> inv32_;
  std::vector<Block3> inv64_;
};

struct SolveStats {
  int iterations = 0;
  double relResidual = 0.0;
  double seconds = 0.0;
  int matvecs = 0;
  int precondApplications = 0;
};

struct CgOptions {
  double tol = 1e-8;
  int maxIterations = 0;  // 0: 10*sqrt(n)
  /// Polak-Ribiere beta, needed when the preconditioner varies between applications.
  bool flexible = false;
};

/// Preconditioned CG on A x = b starting from the given x. Reductions run in
/// fixed order, so results are reproducible for fixed inputs.
SolveStats pcg(const LinearOp& A, const LinearOp& M, std::span<const double> b, std::span<double> x,
               const CgOptions& opt = {});

/// CG iteration driven from outside: the caller computes A*v for the vector it asks for.
class CgRunner {
 public:
  CgRunner(const LinearOp& M, std::span<const double> b, std::span<double> x, const CgOptions& opt);
  bool done() const { return done_; }
  /// Vector whose product with A is needed next.
  std::span<const double> request() const;
  /// Feed A*request(); returns true once converged.
  bool consume(std::span<const double> Av);
  const SolveStats& stats() const { return stats_; }

 private:
  void applyPrecond();
  const LinearOp& M_;
  std::span<const double> b_;
  std::span<double> x_;
  CgOptions opt_;
  std::vector<double> r_, z_, p_, rOld_;
  double bnorm_ = 0, rz_ = 0;
  bool started_ = false, done_ = false;
  int maxIt_ = 0;
  SolveStats stats_;
  double t0_ = 0;
};

SolveStats crsPcg(const BlockCrsMatrix& A, const BlockJacobi& P, std::span<const double> b, std::span<double> x,
                  const CgOptions& opt = {});

/// Matrix-free application of A through element products.
class EbeOperator {
 public:
  explicit EbeOperator(const Model& model, bool atomicScatter = false);

  /// y = A x with A = s.mass*M + s.stiff*K(D) + s.dash*C_b.
  void apply(std::span<const ElementTangents> D, const OperatorScales& s, std::span<const double> x,
             std::span<double> y) const;
  /// Two independent sets in one element loop.
  void applyBatched(std::span<const ElementTangents> D1, std::span<const ElementTangents> D2,
                    const OperatorScales& s1, const OperatorScales& s2, std::span<const double> x1,
                    std::span<const double> x2, std::span<double> y1, std::span<double> y2) const;
  /// y = K(D) x.
  void stiffness(std::span<const ElementTangents> D, std::span<const double> x, std::span<double> y) const;
  /// Diagonal node blocks of A without assembling it.
  std::vector<Block3> diagonalBlocks(std::span<const ElementTangents> D, const OperatorScales& s) const;

  const Model& model() const { return model_; }
  bool atomic() const { return atomic_; }

 private:
  void scatterStiffness(std::span<const ElementTangents> D, double scale, std::span<const double> x,
                        std::span<double> y) const;
  const Model& model_;
  bool atomic_;
};

struct TwoLevelOptions {
  double smootherWeight = 0.6;
  double coarseTol = 1e-1;
  int coarseMaxIterations = 60;
};

/// One V-cycle: block-Jacobi pre/post smoothing on the quadratic level and a
/// single-precision CG solve on the corner-node level.
class TwoLevelPrecond {
 public:
  TwoLevelPrecond(const Model& model, TwoLevelOptions opt = {});

  /// Rebuilds smoother and coarse operator for new tangents/scales.
  void refresh(const EbeOperator& op, std::span<const ElementTangents> D, const OperatorScales& s);
  /// z = V-cycle(r). The fine operator is the one passed to refresh.
  void apply(std::span<const double> r, std::span<double> z) const;

  std::size_t coarseNodes() const { return coarseOf_.size(); }
  /// Corner values of a fine vector.
  void inject(std::span<const double> fine, std::span<double> coarse) const;
  /// Linear interpolation from corners to all quadratic nodes.
  void prolong(std::span<const double> coarse, std::span<double> fine) const;
  /// Transpose of prolong.
  void restrictTransposed(std::span<const double> fine, std::span<double> coarse) const;
  int lastCoarseIterations() const { return lastCoarseIts_; }
  const BlockCrsMatrix& coarseMatrix() const { return coarse64_; }

 private:
  const Model& model_;
  TwoLevelOptions opt_;
  std::vector<std::uint32_t> fineToCoarse_;          // -1 for midside nodes
  std::vector<std::uint32_t> coarseOf_;              // coarse index -> fine node
  std::vector<std::array<std::uint32_t, 2>> parents_;  // coarse parents per fine node
  BlockCrsMatrix coarse64_;                          // pattern + double values (for tests)
  std::vector<float> coarseValues_;
  std::vector<std::array<float, 9>> coarseDiagInv_;
  BlockJacobi smoother_;
  const EbeOperator* op_ = nullptr;
  std::span<const ElementTangents> D_;
  OperatorScales s_;
  mutable int lastCoarseIts_ = 0;

  void coarseSolve(std::span<const float> rhs, std::span<float> x) const;
  void coarseMultiply(std::span<const float> x, std::span<float> y) const;
};

SolveStats ebeIpcg(const EbeOperator& op, std::span<const ElementTangents> D, const OperatorScales& s,
                   const LinearOp& precond, std::span<const double> b, std::span<double> x,
                   const CgOptions& opt = {});

/// Two systems sharing the mesh solved in lockstep with batched products.
/// Each result equals its solo ebeIpcg solve bit for bit.
std::array<SolveStats, 2> ebeIpcgBatched(const EbeOperator& op, std::span<const ElementTangents> D1,
                                         std::span<const ElementTangents> D2, const OperatorScales& s1,
                                         const OperatorScales& s2, const LinearOp& P1, const LinearOp& P2,
                                         std::span<const double> b1, std::span<const double> b2,
                                         std::span<double> x1, std::span<double> x2, const CgOptions& opt = {});

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace tierfem
