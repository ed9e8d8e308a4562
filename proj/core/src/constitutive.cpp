#include "tierfem/constitutive.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "tierfem/byteio.hpp"
#include "tierfem/errors.hpp"

namespace tierfem {

namespace {

inline double sgn(double v) { return (v > 0) - (v < 0); }

// |x|^beta with the common beta == 1 case kept exact and cheap.
inline double powAbs(double x, double beta) { return beta == 1.0 ? std::abs(x) : std::pow(std::abs(x), beta); }

}  // namespace

double skeletonStress(double gamma, const MaterialParams& mat) {
  if (mat.linear) return mat.G0 * gamma;
  return mat.G0 * gamma / (1.0 + mat.alphaRo * powAbs(gamma / mat.gammaRef, mat.betaRo));
}

double skeletonTangent(double gamma, const MaterialParams& mat) {
  if (mat.linear) return mat.G0;
  const double xb = mat.alphaRo * powAbs(gamma / mat.gammaRef, mat.betaRo);
  const double den = 1.0 + xb;
  return mat.G0 * (1.0 + (1.0 - mat.betaRo) * xb) / (den * den);
}

namespace {

// A branch whose reversal point sits on the skeleton touches the skeleton
// again at -gammaRev; otherwise it crosses it on the loading side.
inline bool reversalOnSkeleton(const SpringState& s, const MaterialParams& mat) {
  const double ts = skeletonStress(s.gammaRev, mat);
  return std::abs(s.tauRev - ts) <= 1e-9 * std::abs(ts) + 1e-300;
}

// Branch scale c in tau = tauRev + c f((g - gammaRev)/c). Skeleton reversals use
// the Masing factor 2. Only the last reversal is stored, so a branch started
// inside a loop is scaled to head for the asymptote dirFlag*tau_f instead; with
// c = 2 it would ratchet past tau_f under repeated small reversals.
inline double branchScale(const SpringState& s, const MaterialParams& mat) {
  if (mat.linear || reversalOnSkeleton(s, mat)) return 2.0;
  const double tf = mat.tauLimit();
  return std::clamp((tf - s.dirFlag * s.tauRev) / tf, 1e-12, 2.0);
}

}  // namespace

double activeCurveStress(const SpringState& s, double gamma, const MaterialParams& mat) {
  if (s.skelFlag) return skeletonStress(gamma, mat);
  const double c = branchScale(s, mat);
  return s.tauRev + c * skeletonStress((gamma - s.gammaRev) / c, mat);
}

double springTangent(const SpringState& s, const MaterialParams& mat) {
  if (s.skelFlag) return skeletonTangent(s.gamma, mat);
  return skeletonTangent((s.gamma - s.gammaRev) / branchScale(s, mat), mat);
}

SpringUpdate updateSpring(const SpringState& s, double dGamma, const MaterialParams& mat) {
  SpringState n = s;
  if (dGamma == 0.0) return {n, springTangent(n, mat)};
  const int dir = dGamma > 0 ? 1 : -1;
  const double g = s.gamma + dGamma;

  if (s.skelFlag) {
    // Moving back toward the origin from a loaded skeleton point is a reversal.
    if (s.gamma != 0.0 && sgn(s.gamma) != dir) {
      n.gammaRev = s.gamma;
      n.tauRev = s.tau;
      n.skelFlag = 0;
    }
  } else if (dir != s.dirFlag) {
    n.gammaRev = s.gamma;
    n.tauRev = s.tau;
  }
  n.dirFlag = dir;
  n.gamma = g;

  if (n.skelFlag) {
    n.tau = skeletonStress(g, mat);
    return {n, skeletonTangent(g, mat)};
  }

  const double c = branchScale(n, mat);
  const double tb = n.tauRev + c * skeletonStress((g - n.gammaRev) / c, mat);
  bool rejoin;
  if (mat.linear) {
    rejoin = false;
  } else if (c == 2.0) {
    rejoin = dir * g >= std::abs(n.gammaRev);
  } else {
    const double ts = skeletonStress(g, mat);
    rejoin = dir * g > 0 && dir * (tb - ts) >= 0;
  }
  if (rejoin) {
    n.skelFlag = 1;
    n.tau = skeletonStress(g, mat);
    return {n, skeletonTangent(g, mat)};
  }
  n.tau = tb;
  return {n, skeletonTangent((g - n.gammaRev) / c, mat)};
}

double springSecant(const SpringState& s, const MaterialParams& mat) {
  const double ext = std::max(std::abs(s.gamma), s.skelFlag ? 0.0 : std::abs(s.gammaRev));
  if (ext == 0.0 || mat.linear) return mat.G0;
  return skeletonStress(ext, mat) / ext;
}

// ---------------------------------------------------------------- direction table

namespace {

Voigt6 projection(const Vec3& n, const Vec3& t) {
  return {2 * n[0] * t[0], 2 * n[1] * t[1], 2 * n[2] * t[2], n[0] * t[1] + n[1] * t[0],
          n[1] * t[2] + n[2] * t[1], n[2] * t[0] + n[0] * t[2]};
}

constexpr int kSymEntries = 21;

// Row k of the calibration system: entries of P P^T over the upper triangle,
// with off-diagonal rows scaled by sqrt(2) so the fit is Frobenius on the full matrix.
template <typename Fn>
void forUpper(Fn&& fn) {
  int r = 0;
  for (int a = 0; a < 6; ++a)
    for (int b = a; b < 6; ++b) fn(r++, a, b);
}

}  // namespace

SpringDirectionTable SpringDirectionTable::fromPairs(std::vector<Vec3> normals, std::vector<Vec3> tangents) {
  if (normals.size() != tangents.size() || normals.empty())
    throw InputError("direction table needs matching, non-empty normal and tangent lists");
  SpringDirectionTable t;
  for (std::size_t k = 0; k < normals.size(); ++k) {
    const Vec3& n = normals[k];
    const Vec3& s = tangents[k];
    const double dn = std::hypot(n[0], n[1], n[2]);
    const double ds = std::hypot(s[0], s[1], s[2]);
    const double dot = n[0] * s[0] + n[1] * s[1] + n[2] * s[2];
    if (std::abs(dn - 1) > 1e-12 || std::abs(ds - 1) > 1e-12 || std::abs(dot) > 1e-12)
      throw InputError("direction pairs must be orthonormal");
    t.projections_.push_back(projection(n, s));
  }
  t.normals_ = std::move(normals);
  t.tangents_ = std::move(tangents);
  double tr = 0;
  for (const auto& p : t.projections_)
    for (double v : p) tr += v * v;
  // Uniform weights with the right trace (trace of the unit deviatoric operator is 7).
  t.weights_.assign(t.projections_.size(), 7.0 / tr);
  return t;
}

SpringDirectionTable SpringDirectionTable::fibonacci(int count) {
  if (count < 1) throw InputError("direction count must be positive");
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  const double plastic = 0.7548776662466927;  // 1/rho, low-discrepancy rotation increment
  std::vector<Vec3> normals, tangents;
  for (int k = 0; k < count; ++k) {
    const double z = 1.0 - (2.0 * k + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * k;
    const Vec3 n{r * std::cos(phi), r * std::sin(phi), z};
    const Vec3 ePhi{-std::sin(phi), std::cos(phi), 0.0};
    const Vec3 eTheta{z * std::cos(phi), z * std::sin(phi), -r};
    const double psi = 2.0 * M_PI * std::fmod(k * plastic, 1.0);
    const double c = std::cos(psi), s = std::sin(psi);
    normals.push_back(n);
    tangents.push_back({c * ePhi[0] + s * eTheta[0], c * ePhi[1] + s * eTheta[1], c * ePhi[2] + s * eTheta[2]});
  }
  return fromPairs(std::move(normals), std::move(tangents));
}

Mat6 unitDeviatoricOperator() {
  Mat6 T{};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) T[a * 6 + b] = (a == b) ? 4.0 / 3.0 : -2.0 / 3.0;
  for (int a = 3; a < 6; ++a) T[a * 6 + a] = 1.0;
  return T;
}

Mat6 isotropicElasticD(double Kb, double G0) {
  Mat6 D = unitDeviatoricOperator();
  for (double& v : D) v *= G0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) D[a * 6 + b] += Kb;
  return D;
}

double SpringDirectionTable::calibrationResidual() const {
  Mat6 S{};
  for (std::size_t k = 0; k < projections_.size(); ++k)
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b) S[a * 6 + b] += weights_[k] * projections_[k][a] * projections_[k][b];
  const Mat6 T = unitDeviatoricOperator();
  double num = 0, den = 0;
  for (int i = 0; i < 36; ++i) {
    num += (S[i] - T[i]) * (S[i] - T[i]);
    den += T[i] * T[i];
  }
  return std::sqrt(num / den);
}

SpringDirectionTable calibrateWeights(const SpringDirectionTable& tbl) {
  const auto n = static_cast<Eigen::Index>(tbl.size());
  Eigen::MatrixXd A(kSymEntries, n);
  Eigen::VectorXd b(kSymEntries);
  const Mat6 T = unitDeviatoricOperator();
  forUpper([&](int r, int a, int c) {
    const double scale = (a == c) ? 1.0 : std::sqrt(2.0);
    b(r) = scale * T[a * 6 + c];
    for (Eigen::Index k = 0; k < n; ++k)
      A(r, k) = scale * tbl.projections()[static_cast<std::size_t>(k)][a] *
                tbl.projections()[static_cast<std::size_t>(k)][c];
  });
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  cod.setThreshold(1e-10);
  // Deviatoric symmetric operators form a 15-dimensional space.
  if (cod.rank() < 15)
    throw InputError("insufficient direction coverage: calibration rank " + std::to_string(cod.rank()) + " < 15");
  Eigen::VectorXd w0 = Eigen::Map<const Eigen::VectorXd>(tbl.weights().data(), n);
  Eigen::VectorXd w = w0 + cod.solve(b - A * w0);

  SpringDirectionTable out = tbl;
  out.weights_.assign(w.data(), w.data() + n);
  for (double v : out.weights_)
    if (!(v > 0)) throw InputError("calibration produced a non-positive spring weight");
  out.calibrated_ = true;
  if (out.calibrationResidual() > 1e-8) throw InputError("calibration residual above 1e-8");
  return out;
}

const SpringDirectionTable& defaultDirectionTable() {
  static const SpringDirectionTable table = calibrateWeights(SpringDirectionTable::fibonacci(kSpringsPerPoint));
  return table;
}

// ---------------------------------------------------------------- evaluation point

namespace {

inline void addVolumetric(Mat6& D, double Kb) {
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) D[a * 6 + b] += Kb;
}

inline void symmetrize(Mat6& D, const std::array<double, 21>& upper) {
  int r = 0;
  for (int a = 0; a < 6; ++a)
    for (int b = a; b < 6; ++b) {
      D[a * 6 + b] += upper[r];
      if (a != b) D[b * 6 + a] += upper[r];
      ++r;
    }
}

inline void accumulateOuter(std::array<double, 21>& up, double c, const Voigt6& p) {
  int r = 0;
  for (int a = 0; a < 6; ++a) {
    const double ca = c * p[a];
    for (int b = a; b < 6; ++b) up[r++] += ca * p[b];
  }
}

}  // namespace

EvalPointUpdate updateEvalPoint(EvalPointState& st, const Voigt6& de, const MaterialParams& mat,
                                const SpringDirectionTable& tbl) {
  EvalPointUpdate out{};
  std::array<double, 21> up{};
  const auto& P = tbl.projections();
  const auto& W = tbl.weights();
  for (int k = 0; k < kSpringsPerPoint; ++k) {
    const Voigt6& p = P[static_cast<std::size_t>(k)];
    const double dg = p[0] * de[0] + p[1] * de[1] + p[2] * de[2] + p[3] * de[3] + p[4] * de[4] + p[5] * de[5];
    SpringState& s = st.springs[static_cast<std::size_t>(k)];
    const double tauOld = s.tau;
    const SpringUpdate u = updateSpring(s, dg, mat);
    s = u.state;
    const double w = W[static_cast<std::size_t>(k)];
    const double dtau = w * (s.tau - tauOld);
    for (int a = 0; a < 6; ++a) out.stressIncr[static_cast<std::size_t>(a)] += dtau * p[a];
    accumulateOuter(up, w * u.tangent, p);
  }
  symmetrize(out.D, up);
  addVolumetric(out.D, mat.Kb);
  const double dv = mat.Kb * (de[0] + de[1] + de[2]);
  for (int a = 0; a < 3; ++a) out.stressIncr[static_cast<std::size_t>(a)] += dv;
  return out;
}

Mat6 evalPointTangent(const EvalPointState& st, const MaterialParams& mat, const SpringDirectionTable& tbl) {
  Mat6 D{};
  std::array<double, 21> up{};
  for (std::size_t k = 0; k < tbl.size(); ++k)
    accumulateOuter(up, tbl.weights()[k] * springTangent(st.springs[k], mat), tbl.projections()[k]);
  symmetrize(D, up);
  addVolumetric(D, mat.Kb);
  return D;
}

Voigt6 springStress(const EvalPointState& st, const SpringDirectionTable& tbl) {
  Voigt6 s{};
  for (std::size_t k = 0; k < tbl.size(); ++k)
    for (int a = 0; a < 6; ++a) s[static_cast<std::size_t>(a)] += tbl.weights()[k] * st.springs[k].tau * tbl.projections()[k][a];
  return s;
}

double pointDamping(const EvalPointState& st, const MaterialParams& mat) {
  if (mat.linear || mat.hmax == 0.0) return 0.0;
  double sum = 0;
  for (const auto& s : st.springs) sum += 1.0 - springSecant(s, mat) / mat.G0;
  return mat.hmax * sum / kSpringsPerPoint;
}

double elementDamping(const ElementMaterialState& st, const MaterialParams& mat) {
  double sum = 0;
  for (const auto& pt : st.points) sum += pointDamping(pt, mat);
  return sum / kEvalPointsPerElement;
}

// ---------------------------------------------------------------- binary layout

void serializeSpring(const SpringState& s, std::span<std::uint8_t, kSpringBytes> out) {
  std::vector<std::uint8_t> buf;
  buf.reserve(kSpringBytes);
  byteio::Writer w(buf);
  w.put(s.gamma);
  w.put(s.tau);
  w.put(s.gammaRev);
  w.put(s.tauRev);
  w.put(s.dirFlag);
  w.put(s.skelFlag);
  std::memcpy(out.data(), buf.data(), kSpringBytes);
}

SpringState deserializeSpring(std::span<const std::uint8_t, kSpringBytes> in) {
  byteio::Reader r(in.data(), in.size());
  SpringState s;
  s.gamma = r.get<double>();
  s.tau = r.get<double>();
  s.gammaRev = r.get<double>();
  s.tauRev = r.get<double>();
  s.dirFlag = r.get<std::int32_t>();
  s.skelFlag = r.get<std::int32_t>();
  return s;
}

std::vector<std::uint8_t> serializeElementState(const ElementMaterialState& st) {
  std::vector<std::uint8_t> out(kElementStateBytes);
  std::size_t off = 0;
  for (const auto& pt : st.points)
    for (const auto& s : pt.springs) {
      serializeSpring(s, std::span<std::uint8_t, kSpringBytes>(out.data() + off, kSpringBytes));
      off += kSpringBytes;
    }
  return out;
}

ElementMaterialState deserializeElementState(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kElementStateBytes) throw InputError("element state must be exactly 24000 bytes");
  ElementMaterialState st;
  std::size_t off = 0;
  for (auto& pt : st.points)
    for (auto& s : pt.springs) {
      s = deserializeSpring(std::span<const std::uint8_t, kSpringBytes>(bytes.data() + off, kSpringBytes));
      off += kSpringBytes;
    }
  return st;
}

}  // namespace tierfem
