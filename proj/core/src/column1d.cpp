#include "tierfem/column1d.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "tierfem/errors.hpp"
#include "tierfem/timestepper.hpp"

namespace tierfem {

namespace {

// Voigt slots carrying the traction on a horizontal plane for u_x, u_y, u_z.
constexpr std::array<int, 3> kTraction = {5, 4, 2};

struct GaussPoint {
  std::size_t cell;
  std::array<double, 3> dN;  // dN/dz of the cell's three nodes
  double weight;             // per unit area
  EvalPointState springs;
  Voigt6 sigma{};
  Mat6 D{};
};

}  // namespace

Vec3 ColumnResult::velocityAt(std::size_t i, std::size_t level) const {
  const double* p = &velocity[(i * levels + level) * 3];
  return {p[0], p[1], p[2]};
}

Voigt6 ColumnResult::stressAt(std::size_t i, std::size_t level) const {
  Voigt6 s;
  for (int a = 0; a < 6; ++a) s[a] = stress[(i * levels + level) * 6 + a];
  return s;
}

std::vector<double> ColumnResult::surfaceVelocity(int component) const {
  std::vector<double> out(nt);
  for (std::size_t i = 0; i < nt; ++i) out[i] = velocity[(i * levels + levels - 1) * 3 + component];
  return out;
}

ColumnResult run1dColumn(const Column1D& col, const MaterialTable& materials, const InputWave& wave,
                         std::size_t nt, const ColumnOptions& opt) {
  const std::size_t nz = col.cellMaterial.size();
  if (nz == 0 || !(col.depth > 0)) throw InputError("column has no cells");
  if (nt == 0) throw InputError("column run needs nt > 0");
  if (!(wave.dt > 0)) throw InputError("wave dt must be positive");
  for (int m : col.cellMaterial)
    if (m < 0 || static_cast<std::size_t>(m) >= materials.size()) throw InputError("column references an undefined material");

  const double h = col.depth / nz;
  const std::size_t L = 2 * nz + 1, n = 3 * L;
  const auto& tbl = defaultDirectionTable();
  // cellMaterial is top first; cell c (bottom first) spans levels 2c..2c+2.
  auto matOf = [&](std::size_t c) -> const MaterialParams& { return materials[col.cellMaterial[nz - 1 - c]]; };
  const int baseId = opt.baseMaterial.value_or(col.cellMaterial.back());
  if (baseId < 0 || static_cast<std::size_t>(baseId) >= materials.size()) throw InputError("undefined base material");
  const MaterialParams& base = materials[baseId];

  std::vector<double> mass(n, 0.0), dashpot(n, 0.0);
  std::vector<GaussPoint> gps;
  const double xi = 1.0 / std::sqrt(3.0);
  for (std::size_t c = 0; c < nz; ++c) {
    const MaterialParams& m = matOf(c);
    const double lump[3] = {m.rho * h / 6, 2 * m.rho * h / 3, m.rho * h / 6};
    for (int a = 0; a < 3; ++a)
      for (int d = 0; d < 3; ++d) mass[3 * (2 * c + a) + d] += lump[a];
    for (double x : {-xi, xi}) {
      GaussPoint g;
      g.cell = c;
      g.dN = {(x - 0.5) * 2 / h, -2 * x * 2 / h, (x + 0.5) * 2 / h};
      g.weight = 0.5 * h;
      g.D = m.linear ? isotropicElasticD(m.Kb, m.G0) : evalPointTangent(g.springs, m, tbl);
      gps.push_back(g);
    }
  }
  const std::array<double, 3> cb = {base.rho * base.vs(), base.rho * base.vs(), base.rho * base.vp()};
  for (int d = 0; d < 3; ++d) dashpot[d] = cb[d];

  Eigen::MatrixXd K(n, n);
  auto assembleK = [&] {
    K.setZero();
    for (const auto& g : gps)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
              K(3 * (2 * g.cell + a) + i, 3 * (2 * g.cell + b) + j) +=
                  g.weight * g.dN[a] * g.dN[b] * g.D[6 * kTraction[i] + kTraction[j]];
  };
  assembleK();

  const NewmarkCoeffs nm = NewmarkCoeffs::make(wave.dt);
  RayleighCoeffs ray;
  double hbar = 0;
  TimeState st(n);
  std::vector<double> f(n, 0.0), rhs(n), dq(n);
  auto force = [&](std::size_t i) {
    for (int d = 0; d < 3; ++d) f[d] = 2 * cb[d] * wave.at(d, i);
  };

  ColumnResult res;
  res.dt = wave.dt;
  res.nt = nt;
  res.levels = L;
  res.velocity.assign(nt * L * 3, 0.0);
  res.stress.assign(nt * L * 6, 0.0);
  res.hbar.assign(nt, 0.0);
  auto record = [&](std::size_t i) {
    for (std::size_t k = 0; k < L; ++k)
      for (int d = 0; d < 3; ++d) res.velocity[(i * L + k) * 3 + d] = st.v[3 * k + d];
    // Linear extrapolation of the two Gauss-point stresses; shared levels averaged.
    std::vector<int> hits(L, 0);
    double* S = &res.stress[i * L * 6];
    const double s3 = std::sqrt(3.0) / 2;
    for (std::size_t c = 0; c < nz; ++c) {
      const Voigt6& lo = gps[2 * c].sigma;
      const Voigt6& hi = gps[2 * c + 1].sigma;
      for (int a = 0; a < 3; ++a) {
        const double x = a - 1.0;
        const std::size_t k = 2 * c + a;
        for (int v = 0; v < 6; ++v) S[k * 6 + v] += 0.5 * (lo[v] + hi[v]) + (hi[v] - lo[v]) * s3 * x;
        ++hits[k];
      }
    }
    for (std::size_t k = 0; k < L; ++k)
      for (int v = 0; v < 6; ++v) S[k * 6 + v] /= hits[k];
    res.hbar[i] = hbar;
  };

  force(0);
  initialAcceleration(mass, dashpot, st, f);
  record(0);

  const LinearOp Kop = [&](std::span<const double> x, std::span<double> y) {
    Eigen::Map<Eigen::VectorXd>(y.data(), n) = K * Eigen::Map<const Eigen::VectorXd>(x.data(), n);
  };
  for (std::size_t i = 1; i < nt; ++i) {
    force(i);
    buildRhs(mass, dashpot, Kop, nm, ray, st, f, rhs);
    const OperatorScales sc = OperatorScales::make(nm, ray);
    Eigen::MatrixXd A = sc.stiff * K;
    for (std::size_t k = 0; k < n; ++k) A(k, k) += sc.mass * mass[k] + sc.dash * dashpot[k];
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw SolverError("column system is not positive definite");
    const Eigen::VectorXd duv = llt.solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), n));
    std::span<const double> du(duv.data(), n);

    std::fill(dq.begin(), dq.end(), 0.0);
    double hsum = 0;
    int hcount = 0;
    for (auto& g : gps) {
      const MaterialParams& m = matOf(g.cell);
      Voigt6 de{};
      for (int a = 0; a < 3; ++a)
        for (int d = 0; d < 3; ++d) de[kTraction[d]] += g.dN[a] * du[3 * (2 * g.cell + a) + d];
      Voigt6 ds{};
      if (m.linear) {
        for (int r = 0; r < 6; ++r)
          for (int s = 0; s < 6; ++s) ds[r] += g.D[6 * r + s] * de[s];
      } else {
        const auto up = updateEvalPoint(g.springs, de, m, tbl);
        g.D = up.D;
        ds = up.stressIncr;
        hsum += pointDamping(g.springs, m);
        ++hcount;
      }
      for (int v = 0; v < 6; ++v) g.sigma[v] += ds[v];
      for (int a = 0; a < 3; ++a)
        for (int d = 0; d < 3; ++d) dq[3 * (2 * g.cell + a) + d] += g.weight * g.dN[a] * ds[kTraction[d]];
    }
    // Same damping update as the 3D engine: hbar of this step feeds the next.
    hbar = hcount ? hsum / hcount : 0.0;
    ray = updateRayleigh(hbar, opt.fmin, opt.fmax);
    assembleK();
    applyUpdates(st, du, dq, nm);
    for (double v : st.u)
      if (!std::isfinite(v)) throw SolverError("non-finite column displacement at step " + std::to_string(i));
    record(i);
  }
  return res;
}

}  // namespace tierfem
