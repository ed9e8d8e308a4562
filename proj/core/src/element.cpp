#include "tierfem/element.hpp"

#include <algorithm>
#include <cmath>

#include "tierfem/errors.hpp"

namespace tierfem {

const QuadratureRule5& QuadratureRule5::get() {
  static const QuadratureRule5 rule = [] {
    QuadratureRule5 r{};
    for (int j = 0; j < 4; ++j) {
      for (int i = 0; i < 4; ++i) r.bary[j][i] = (i == j) ? 0.5 : 1.0 / 6.0;
      r.weightFraction[j] = 9.0 / 20.0;
    }
    r.bary[4] = {0.25, 0.25, 0.25, 0.25};
    r.weightFraction[4] = -4.0 / 5.0;
    return r;
  }();
  return rule;
}

Mat6 centerTangent(const ElementTangents& D) {
  Mat6 c{};
  for (int i = 0; i < 36; ++i) c[i] = 0.25 * (D[0][i] + D[1][i] + D[2][i] + D[3][i]);
  return c;
}

std::pair<std::array<Vec3, 4>, double> barycentricGradients(const Mesh& mesh, std::size_t e) {
  const Tet10& t = mesh.tets[e];
  const Vec3& x0 = mesh.nodes[t[0]];
  double J[3][3];
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) J[r][c] = mesh.nodes[t[c + 1]][r] - x0[r];
  const double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                     J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                     J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
  if (!(det > 0)) throw InputError("element " + std::to_string(e) + " is inverted or degenerate");
  // Rows of J^-1 are the gradients of barycentric coordinates 1..3.
  double inv[3][3];
  inv[0][0] = (J[1][1] * J[2][2] - J[1][2] * J[2][1]) / det;
  inv[0][1] = (J[0][2] * J[2][1] - J[0][1] * J[2][2]) / det;
  inv[0][2] = (J[0][1] * J[1][2] - J[0][2] * J[1][1]) / det;
  inv[1][0] = (J[1][2] * J[2][0] - J[1][0] * J[2][2]) / det;
  inv[1][1] = (J[0][0] * J[2][2] - J[0][2] * J[2][0]) / det;
  inv[1][2] = (J[0][2] * J[1][0] - J[0][0] * J[1][2]) / det;
  inv[2][0] = (J[1][0] * J[2][1] - J[1][1] * J[2][0]) / det;
  inv[2][1] = (J[0][1] * J[2][0] - J[0][0] * J[2][1]) / det;
  inv[2][2] = (J[0][0] * J[1][1] - J[0][1] * J[1][0]) / det;
  std::array<Vec3, 4> gL{};
  for (int i = 0; i < 3; ++i) {
    gL[i + 1] = {inv[i][0], inv[i][1], inv[i][2]};
    for (int c = 0; c < 3; ++c) gL[0][c] -= inv[i][c];
  }
  return {gL, det / 6.0};
}

ElementKernelData precomputeElement(const Mesh& mesh, std::size_t e) {
  ElementKernelData kd;
  const Tet10& t = mesh.tets[e];
  std::copy(t.begin(), t.end(), kd.nodes.begin());
  const auto [gL, volume] = barycentricGradients(mesh, e);
  kd.volume = volume;
  const auto& rule = QuadratureRule5::get();
  for (int j = 0; j < kQuadPoints; ++j) {
    kd.weight[j] = rule.weightFraction[j] * kd.volume;
    const auto& L = rule.bary[j];
    for (int a = 0; a < 4; ++a)
      for (int c = 0; c < 3; ++c) kd.grad[j][a][c] = (4.0 * L[a] - 1.0) * gL[a][c];
    for (std::size_t m = 0; m < kTetEdges.size(); ++m) {
      const int a = kTetEdges[m][0], b = kTetEdges[m][1];
      for (int c = 0; c < 3; ++c) kd.grad[j][4 + m][c] = 4.0 * (L[b] * gL[a][c] + L[a] * gL[b][c]);
    }
  }
  return kd;
}

std::array<double, 180> ElementKernelData::bMatrix(int j) const {
  std::array<double, 180> B{};
  for (int n = 0; n < 10; ++n) {
    const auto& g = grad[j][n];
    const int c = 3 * n;
    B[0 * 30 + c + 0] = g[0];
    B[1 * 30 + c + 1] = g[1];
    B[2 * 30 + c + 2] = g[2];
    B[3 * 30 + c + 0] = g[1];
    B[3 * 30 + c + 1] = g[0];
    B[4 * 30 + c + 1] = g[2];
    B[4 * 30 + c + 2] = g[1];
    B[5 * 30 + c + 0] = g[2];
    B[5 * 30 + c + 2] = g[0];
  }
  return B;
}

Voigt6 ElementKernelData::strain(int j, std::span<const double, 30> u) const {
  Voigt6 e{};
  for (int n = 0; n < 10; ++n) {
    const auto& g = grad[j][n];
    const double ux = u[3 * n], uy = u[3 * n + 1], uz = u[3 * n + 2];
    e[0] += g[0] * ux;
    e[1] += g[1] * uy;
    e[2] += g[2] * uz;
    e[3] += g[1] * ux + g[0] * uy;
    e[4] += g[2] * uy + g[1] * uz;
    e[5] += g[0] * uz + g[2] * ux;
  }
  return e;
}

void ElementKernelData::addBtSigma(int j, const Voigt6& s, double scale, std::span<double, 30> f) const {
  for (int n = 0; n < 10; ++n) {
    const auto& g = grad[j][n];
    f[3 * n] += scale * (g[0] * s[0] + g[1] * s[3] + g[2] * s[5]);
    f[3 * n + 1] += scale * (g[1] * s[1] + g[0] * s[3] + g[2] * s[4]);
    f[3 * n + 2] += scale * (g[2] * s[2] + g[1] * s[4] + g[0] * s[5]);
  }
}

namespace {

inline Voigt6 mul6(const Mat6& D, const Voigt6& e) {
  Voigt6 s{};
  for (int a = 0; a < 6; ++a) {
    double v = 0;
    for (int b = 0; b < 6; ++b) v += D[a * 6 + b] * e[b];
    s[a] = v;
  }
  return s;
}

inline const Mat6& tangentAt(const ElementTangents& D, const Mat6& center, int j) {
  return j == kCenterPoint ? center : D[j];
}

}  // namespace

Mat30 elementStiffness(const ElementKernelData& kd, const ElementTangents& D) {
  Mat30 K{};
  const Mat6 Dc = centerTangent(D);
  for (int j = 0; j < kQuadPoints; ++j) {
    const auto B = kd.bMatrix(j);
    const Mat6& Dj = tangentAt(D, Dc, j);
    std::array<double, 180> DB{};
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b) {
        const double d = Dj[a * 6 + b];
        if (d == 0.0) continue;
        for (int c = 0; c < 30; ++c) DB[a * 30 + c] += d * B[b * 30 + c];
      }
    const double w = kd.weight[j];
    for (int r = 0; r < 30; ++r)
      for (int c = r; c < 30; ++c) {
        double v = 0;
        for (int a = 0; a < 6; ++a) v += B[a * 30 + r] * DB[a * 30 + c];
        K[r * 30 + c] += w * v;
      }
  }
  for (int r = 0; r < 30; ++r)
    for (int c = 0; c < r; ++c) K[r * 30 + c] = K[c * 30 + r];
  return K;
}

std::array<double, 30> elementProduct(const ElementKernelData& kd, const ElementTangents& D,
                                      std::span<const double, 30> u) {
  std::array<double, 30> f{};
  const Mat6 Dc = centerTangent(D);
  for (int j = 0; j < kQuadPoints; ++j) {
    const Voigt6 e = kd.strain(j, u);
    kd.addBtSigma(j, mul6(tangentAt(D, Dc, j), e), kd.weight[j], f);
  }
  return f;
}

void elementProduct2(const ElementKernelData& kd, const ElementTangents& D1, const ElementTangents& D2,
                     std::span<const double, 30> u1, std::span<const double, 30> u2, std::span<double, 30> f1,
                     std::span<double, 30> f2) {
  std::fill(f1.begin(), f1.end(), 0.0);
  std::fill(f2.begin(), f2.end(), 0.0);
  const Mat6 Dc1 = centerTangent(D1);
  const Mat6 Dc2 = centerTangent(D2);
  for (int j = 0; j < kQuadPoints; ++j) {
    const Voigt6 e1 = kd.strain(j, u1);
    const Voigt6 e2 = kd.strain(j, u2);
    kd.addBtSigma(j, mul6(tangentAt(D1, Dc1, j), e1), kd.weight[j], f1);
    kd.addBtSigma(j, mul6(tangentAt(D2, Dc2, j), e2), kd.weight[j], f2);
  }
}

std::array<double, 30> lumpedMass(const ElementKernelData& kd, double rho) {
  std::array<double, 30> m{};
  const double mv = rho * kd.volume;
  for (int n = 0; n < 10; ++n) {
    const double v = n < 4 ? mv / 36.0 : 4.0 * mv / 27.0;
    for (int c = 0; c < 3; ++c) m[3 * n + c] = v;
  }
  return m;
}

// ---------------------------------------------------------------- boundary

std::vector<BoundaryFace> boundaryFaces(const Mesh& mesh) {
  std::vector<BoundaryFace> faces;
  const double tol = 1e-9 * std::max({mesh.Lx, mesh.Ly, mesh.Lz});
  for (std::uint32_t e = 0; e < mesh.tets.size(); ++e) {
    const Tet10& t = mesh.tets[e];
    for (int opp = 0; opp < 4; ++opp) {
      std::array<int, 3> c{};
      int q = 0;
      for (int v = 0; v < 4; ++v)
        if (v != opp) c[q++] = v;
      const Vec3& p0 = mesh.nodes[t[c[0]]];
      const Vec3& p1 = mesh.nodes[t[c[1]]];
      const Vec3& p2 = mesh.nodes[t[c[2]]];
      auto onPlane = [&](int axis, double value) {
        return std::abs(p0[axis] - value) < tol && std::abs(p1[axis] - value) < tol &&
               std::abs(p2[axis] - value) < tol;
      };
      BoundaryFace f;
      if (onPlane(2, -mesh.Lz)) {
        f.side = FaceSide::Bottom;
        f.normal = {0, 0, -1};
      } else if (onPlane(2, 0.0)) {
        f.side = FaceSide::Top;
        f.normal = {0, 0, 1};
      } else if (onPlane(0, 0.0)) {
        f.side = FaceSide::XMin;
        f.normal = {-1, 0, 0};
      } else if (onPlane(0, mesh.Lx)) {
        f.side = FaceSide::XMax;
        f.normal = {1, 0, 0};
      } else if (onPlane(1, 0.0)) {
        f.side = FaceSide::YMin;
        f.normal = {0, -1, 0};
      } else if (onPlane(1, mesh.Ly)) {
        f.side = FaceSide::YMax;
        f.normal = {0, 1, 0};
      } else {
        continue;
      }
      f.element = e;
      f.nodes[0] = t[c[0]];
      f.nodes[1] = t[c[1]];
      f.nodes[2] = t[c[2]];
      const std::array<std::array<int, 2>, 3> faceEdges{{{c[0], c[1]}, {c[1], c[2]}, {c[0], c[2]}}};
      for (int k = 0; k < 3; ++k) {
        for (std::size_t m = 0; m < kTetEdges.size(); ++m) {
          const auto& ed = kTetEdges[m];
          if ((ed[0] == faceEdges[k][0] && ed[1] == faceEdges[k][1]) ||
              (ed[1] == faceEdges[k][0] && ed[0] == faceEdges[k][1]))
            f.nodes[3 + k] = t[4 + m];
        }
      }
      const Vec3 a{p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]};
      const Vec3 b{p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]};
      f.area = 0.5 * std::hypot(a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]);
      faces.push_back(f);
    }
  }
  return faces;
}

DashpotCoefficients dashpotCoefficients(const MaterialParams& mat, double area) {
  if (!(area > 0)) throw InputError("dashpot on a zero-area face");
  return {mat.rho * mat.vp() * area, mat.rho * mat.vs() * area};
}

std::array<double, 6> faceTributaryAreas(double area) {
  const double c = area / 19.0, m = 16.0 * area / 57.0;
  return {c, c, c, m, m, m};
}

std::array<std::array<double, 3>, 6> dashpotMatrix(const BoundaryFace& face, const MaterialParams& mat) {
  if (face.side == FaceSide::Top) throw InputError("dashpots apply only to bottom and side faces");
  const DashpotCoefficients unit = dashpotCoefficients(mat, 1.0);
  if (!(face.area > 0)) throw InputError("dashpot on a zero-area face");
  const auto trib = faceTributaryAreas(face.area);
  std::array<std::array<double, 3>, 6> out{};
  for (int n = 0; n < 6; ++n)
    for (int d = 0; d < 3; ++d) {
      const double nn = face.normal[d] * face.normal[d];
      out[n][d] = trib[n] * (nn * unit.normal + (1.0 - nn) * unit.tangential);
    }
  return out;
}

}  // namespace tierfem
