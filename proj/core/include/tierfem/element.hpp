#pragma once

#include <array>
#include <span>
#include <vector>

#include "constitutive.hpp"
#include "mesh.hpp"

namespace tierfem {

/// Degree-3 five-point tetrahedron rule. Points 0-3 sit at barycentric
/// (1/2,1/6,1/6,1/6) permutations and double as the material evaluation points;
/// point 4 is the centroid with negative weight.
struct QuadratureRule5 {
  std::array<std::array<double, 4>, 5> bary;
  std::array<double, 5> weightFraction;  // multiply by element volume
  static const QuadratureRule5& get();
};

inline constexpr int kQuadPoints = 5;
inline constexpr int kCenterPoint = 4;

/// Evaluation-point tangents of one element. The centroid quadrature point uses their mean.
using ElementTangents = std::array<Mat6, kEvalPointsPerElement>;
Mat6 centerTangent(const ElementTangents& D);

struct ElementKernelData {
  std::array<std::uint32_t, 10> nodes{};
  double volume = 0;
  std::array<double, kQuadPoints> weight{};
  /// dN_a/dx_i for each quadrature point and node: B in compact form.
  std::array<std::array<std::array<double, 3>, 10>, kQuadPoints> grad{};

  /// Dense 6x30 strain-displacement matrix at quadrature point j (row-major).
  std::array<double, 180> bMatrix(int j) const;
  /// Voigt strain (engineering shear) at point j for a local 30-vector.
  Voigt6 strain(int j, std::span<const double, 30> u) const;
  /// f += scale * B_j^T sigma.
  void addBtSigma(int j, const Voigt6& sigma, double scale, std::span<double, 30> f) const;
};

/// Gradients of the four barycentric coordinates of element e and its volume.
/// Throws InputError for a non-positive Jacobian.
std::pair<std::array<Vec3, 4>, double> barycentricGradients(const Mesh& mesh, std::size_t e);

/// Throws InputError for a non-positive Jacobian.
ElementKernelData precomputeElement(const Mesh& mesh, std::size_t e);

using Mat30 = std::array<double, 900>;

Mat30 elementStiffness(const ElementKernelData& kd, const ElementTangents& D);
/// K_e u without forming K_e.
std::array<double, 30> elementProduct(const ElementKernelData& kd, const ElementTangents& D,
                                      std::span<const double, 30> u);
/// Two products sharing one pass over the element geometry.
void elementProduct2(const ElementKernelData& kd, const ElementTangents& D1, const ElementTangents& D2,
                     std::span<const double, 30> u1, std::span<const double, 30> u2, std::span<double, 30> f1,
                     std::span<double, 30> f2);

/// HRZ-lumped mass per local DOF: rho*V/36 at corners, 4*rho*V/27 at midside nodes.
std::array<double, 30> lumpedMass(const ElementKernelData& kd, double rho);

// ---- absorbing boundary

enum class FaceSide : std::uint8_t { Bottom, XMin, XMax, YMin, YMax, Top };

struct BoundaryFace {
  std::uint32_t element = 0;
  std::array<std::uint32_t, 6> nodes{};  // 3 corners then midsides (0,1) (1,2) (0,2)
  double area = 0;
  Vec3 normal{};  // outward unit normal
  FaceSide side = FaceSide::Bottom;
};

/// All element faces lying on the box boundary.
std::vector<BoundaryFace> boundaryFaces(const Mesh& mesh);

struct DashpotCoefficients {
  double normal;      // rho * Vp * A
  double tangential;  // rho * Vs * A
};
DashpotCoefficients dashpotCoefficients(const MaterialParams& mat, double area);

/// HRZ tributary areas of a 6-node triangle: A/19 per corner, 16A/57 per midside.
std::array<double, 6> faceTributaryAreas(double area);

/// Lysmer-Kuhlemeyer diagonal dashpot per face node and direction (N s/m).
/// Throws InputError for top-surface or zero-area faces.
std::array<std::array<double, 3>, 6> dashpotMatrix(const BoundaryFace& face, const MaterialParams& mat);

}  // namespace tierfem
