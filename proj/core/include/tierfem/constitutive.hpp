#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mesh.hpp"

namespace tierfem {

inline constexpr int kSpringsPerPoint = 150;
inline constexpr int kEvalPointsPerElement = 4;

/// One 1D shear spring following a Ramberg-Osgood skeleton with Masing hysteresis.
struct SpringState {
  double gamma = 0.0;
  double tau = 0.0;
  double gammaRev = 0.0;
  double tauRev = 0.0;
  std::int32_t dirFlag = 1;   // -1 or +1
  std::int32_t skelFlag = 1;  // 1 on the skeleton, 0 on a hysteresis branch
};
static_assert(sizeof(SpringState) == 40);

struct EvalPointState {
  std::array<SpringState, kSpringsPerPoint> springs{};
};

struct ElementMaterialState {
  std::array<EvalPointState, kEvalPointsPerElement> points{};
};
static_assert(sizeof(ElementMaterialState) == 24000);
static_assert(std::is_trivially_copyable_v<ElementMaterialState>);

using Voigt6 = std::array<double, 6>;
/// Row-major symmetric 6x6 in Voigt order (11,22,33,12,23,31), engineering shear.
using Mat6 = std::array<double, 36>;

// ---- 1D spring

/// tau = G0*gamma / (1 + alpha*|gamma/gammaRef|^beta); G0*gamma for linear materials.
double skeletonStress(double gamma, const MaterialParams& mat);
double skeletonTangent(double gamma, const MaterialParams& mat);

/// Stress of the spring's active curve evaluated at an arbitrary strain.
double activeCurveStress(const SpringState& s, double gamma, const MaterialParams& mat);
/// d tau / d gamma of the active curve at the spring's current strain.
double springTangent(const SpringState& s, const MaterialParams& mat);

struct SpringUpdate {
  SpringState state;
  double tangent;
};

/// Increment-driven update. Reversal points start Masing branches
/// tau = tauRev + 2*skeleton((gamma - gammaRev)/2). A branch that started on the
/// skeleton rejoins it once |gamma| passes |gammaRev|; a branch that started
/// inside the loop rejoins where it crosses the skeleton on its loading side.
SpringUpdate updateSpring(const SpringState& s, double dGamma, const MaterialParams& mat);

/// Secant modulus at the spring's largest remembered strain.
double springSecant(const SpringState& s, const MaterialParams& mat);

// ---- direction table

class SpringDirectionTable {
 public:
  /// Spherical-Fibonacci normals; tangents rotate by a low-discrepancy angle
  /// inside each normal's tangent plane. Weights are uniform until calibrated.
  static SpringDirectionTable fibonacci(int count = kSpringsPerPoint);
  static SpringDirectionTable fromPairs(std::vector<Vec3> normals, std::vector<Vec3> tangents);

  std::size_t size() const { return weights_.size(); }
  const std::vector<Vec3>& normals() const { return normals_; }
  const std::vector<Vec3>& tangents() const { return tangents_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Voigt6>& projections() const { return projections_; }

  /// Frobenius-relative distance of sum_k w_k P_k P_k^T from the unit deviatoric operator.
  double calibrationResidual() const;
  bool calibrated() const { return calibrated_; }

 private:
  friend SpringDirectionTable calibrateWeights(const SpringDirectionTable& tbl);
  std::vector<Vec3> normals_, tangents_;
  std::vector<double> weights_;
  std::vector<Voigt6> projections_;
  bool calibrated_ = false;
};

/// Minimum-change least-squares weights so the linear limit is exactly isotropic.
/// Throws InputError when the directions cannot span the deviatoric space or
/// when the fit requires non-positive weights.
SpringDirectionTable calibrateWeights(const SpringDirectionTable& tbl);

/// Shared calibrated 150-direction table.
const SpringDirectionTable& defaultDirectionTable();

/// Unit deviatoric operator: G0 times this is the isotropic shear part of D.
Mat6 unitDeviatoricOperator();
Mat6 isotropicElasticD(double Kb, double G0);

// ---- evaluation point

struct EvalPointUpdate {
  Mat6 D;
  Voigt6 stressIncr;
};

/// Advances all springs of one evaluation point in place by a Voigt strain increment
/// and returns the new tangent together with the stress increment.
EvalPointUpdate updateEvalPoint(EvalPointState& st, const Voigt6& strainIncr, const MaterialParams& mat,
                                const SpringDirectionTable& tbl);

/// Tangent of an evaluation point from its current spring states.
Mat6 evalPointTangent(const EvalPointState& st, const MaterialParams& mat, const SpringDirectionTable& tbl);

/// Deviatoric stress carried by the springs, sum_k w_k tau_k P_k.
Voigt6 springStress(const EvalPointState& st, const SpringDirectionTable& tbl);

/// hmax * (1 - Gsec/G0) averaged over the springs of one point.
double pointDamping(const EvalPointState& st, const MaterialParams& mat);
/// pointDamping averaged over the evaluation points.
double elementDamping(const ElementMaterialState& st, const MaterialParams& mat);

// ---- binary layout

inline constexpr std::size_t kSpringBytes = 40;
inline constexpr std::size_t kElementStateBytes = 24000;

void serializeSpring(const SpringState& s, std::span<std::uint8_t, kSpringBytes> out);
SpringState deserializeSpring(std::span<const std::uint8_t, kSpringBytes> in);
std::vector<std::uint8_t> serializeElementState(const ElementMaterialState& st);
ElementMaterialState deserializeElementState(std::span<const std::uint8_t> bytes);

}  // namespace tierfem
