#include <cmath>
#include <complex>

#include "doctest.h"
#include "tierfem/column1d.hpp"
#include "tierfem/errors.hpp"

using namespace tierfem;

namespace {

Column1D uniformColumn(double H, int nz, int material) {
  Column1D c;
  c.depth = H;
  c.layers = {{H, material}};
  for (int k = 0; k < nz; ++k) {
    c.cellTop.push_back(-k * H / nz);
    c.cellMaterial.push_back(material);
  }
  return c;
}

InputWave sine(double f, double amp, std::size_t nt, double dt) {
  InputWave w = InputWave::zeros(nt, dt);
  for (std::size_t i = 0; i < nt; ++i) w.samples[0][i] = amp * std::sin(2 * M_PI * f * i * dt);
  w.bounds = {amp, 0, 0};
  return w;
}

double steadyPeak(const std::vector<double>& v, std::size_t from) {
  double m = 0;
  for (std::size_t i = from; i < v.size(); ++i) m = std::max(m, std::abs(v[i]));
  return m;
}

}  // namespace

TEST_CASE("linear uniform layer on elastic bedrock: resonance amplification") {
  // Surface / outcrop transfer 1 / (cos kH + i a sin kH), a = rho_s Vs / (rho_r Vr).
  MaterialParams soil = MaterialParams::fromVs(100.0, 1700.0, 0.45, true);
  MaterialParams rock = MaterialParams::fromVs(400.0, 2000.0, 0.35, true);
  const MaterialTable mats = {soil, rock};
  const double H = 25.0, f1 = soil.vs() / (4 * H);
  const double a = soil.rho * soil.vs() / (rock.rho * rock.vs());
  const double kH = 2 * M_PI * f1 * H / soil.vs();
  const double oracle = 1.0 / std::abs(std::complex<double>(std::cos(kH), a * std::sin(kH)));

  const double dt = 0.005;
  const std::size_t nt = 8000;
  ColumnOptions opt;
  opt.baseMaterial = 1;
  const auto r = run1dColumn(uniformColumn(H, 10, 0), mats, sine(f1, 0.01, nt, dt), nt, opt);
  const double amp = steadyPeak(r.surfaceVelocity(0), nt - 1000) / (2 * 0.01);
  CHECK(amp == doctest::Approx(oracle).epsilon(0.03));
  CHECK(steadyPeak(r.surfaceVelocity(1), 0) == 0.0);
}

TEST_CASE("very stiff column reproduces the outcrop motion") {
  MaterialParams hard = MaterialParams::fromVs(4000.0, 2500.0, 0.3, true);
  const double dt = 0.005;
  const std::size_t nt = 2000;
  const auto r = run1dColumn(uniformColumn(25.0, 5, 0), {hard}, sine(1.0, 0.02, nt, dt), nt);
  const double amp = steadyPeak(r.surfaceVelocity(0), nt / 2) / (2 * 0.02);
  CHECK(amp == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("nonlinear column stays bounded and reports damping") {
  const MaterialTable mats = defaultMaterials();
  Column1D c = uniformColumn(30.0, 6, 0);
  c.cellMaterial.back() = 1;
  const double dt = 0.005;
  const std::size_t nt = 600;
  const auto r = run1dColumn(c, mats, sine(1.0, 0.3, nt, dt), nt);
  double hmax = 0;
  for (double h : r.hbar) hmax = std::max(hmax, h);
  CHECK(hmax > 0.0);
  CHECK(hmax <= mats[0].hmax);
  for (double v : r.velocity) REQUIRE(std::isfinite(v));
  // Stress at the surface is traction free up to extrapolation error.
  const Voigt6 top = r.stressAt(nt - 1, r.levels - 1);
  const Voigt6 mid = r.stressAt(nt - 1, r.levels / 2);
  CHECK(std::abs(top[5]) < 0.2 * std::abs(mid[5]) + 1e-9);
}

TEST_CASE("linear column scales with input amplitude") {
  const MaterialTable mats = {MaterialParams::fromVs(150.0, 1800.0, 0.4, true)};
  const std::size_t nt = 400;
  const auto a = run1dColumn(uniformColumn(20, 4, 0), mats, sine(1.5, 0.1, nt, 0.005), nt);
  const auto b = run1dColumn(uniformColumn(20, 4, 0), mats, sine(1.5, 0.05, nt, 0.005), nt);
  const auto va = a.surfaceVelocity(0), vb = b.surfaceVelocity(0);
  for (std::size_t i = 0; i < nt; ++i) CHECK(vb[i] == doctest::Approx(0.5 * va[i]).epsilon(1e-9).scale(1e-12));
}

TEST_CASE("column input validation") {
  Column1D empty;
  CHECK_THROWS_AS(run1dColumn(empty, defaultMaterials(), InputWave::zeros(10, 0.005), 10), InputError);
  Column1D bad = uniformColumn(10, 2, 5);
  CHECK_THROWS_AS(run1dColumn(bad, defaultMaterials(), InputWave::zeros(10, 0.005), 10), InputError);
}
