#include <cmath>

#include "doctest.h"
#include "tierfem/errors.hpp"
#include "tierfem/run.hpp"

using namespace tierfem;

namespace {

RunConfig smallConfig(StrategyKind k, std::size_t nt = 40) {
  RunConfig cfg;
  cfg.mesh.Lx = cfg.mesh.Ly = 20;
  cfg.mesh.Lz = 10;
  cfg.mesh.nx = cfg.mesh.ny = 2;
  cfg.mesh.nz = 2;
  cfg.mesh.interfaces = {InterfaceSpec::flat(-5)};
  cfg.nt = nt;
  cfg.engine.strategy = k;
  cfg.engine.partitionElements = 10;  // 5 partitions of 48 elements
  cfg.keepDisplacementHistory = true;
  cfg.observations = {{"c", 10, 10}};
  return cfg;
}

const Model& smallModel() {
  static const Model m = [] {
    const auto cfg = smallConfig(StrategyKind::SlowOnly);
    return buildModel(cfg.mesh, cfg.materials, cfg.side, cfg.fmax);
  }();
  return m;
}

InputWave wave(std::uint64_t seed, double scale, std::size_t nt = 40) {
  auto w = generateRandomWave(seed, std::max<std::size_t>(nt, 160), 0.005);
  w.scale(scale);
  return w;
}

double relL2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("strategies 1-3 are bitwise identical, batched EBE is close") {
  const Model& m = smallModel();
  const InputWave w[1] = {wave(5, 0.5)};
  const auto r1 = runTimeHistory(m, smallConfig(StrategyKind::SlowOnly), w);
  const auto r2 = runTimeHistory(m, smallConfig(StrategyKind::SolverFast), w);
  const auto r3 = runTimeHistory(m, smallConfig(StrategyKind::Pipelined), w);
  const auto r4 = runTimeHistory(m, smallConfig(StrategyKind::PipelinedBatch2Ebe), w);
  CHECK(r1.hbar.back() > 0.0);
  CHECK(r1.displacementHistory[0] == r2.displacementHistory[0]);
  CHECK(r1.displacementHistory[0] == r3.displacementHistory[0]);
  CHECK(relL2(r4.displacementHistory[0], r1.displacementHistory[0]) <= 1e-6);
  for (const auto& t : r3.telemetry) {
    CHECK(t.residentHigh <= 2);
    CHECK(t.bytesUp == m.nElements() * 24000);
  }
  for (const auto& t : r1.telemetry) CHECK(t.bytesUp + t.bytesDown == 0);
  CHECK(r2.telemetry[0].bytesDown == m.nDofs() * 8);
  CHECK(r2.telemetry[0].bytesUp == m.nElements() * sizeof(ElementTangents));
}

TEST_CASE("two batched sets equal two single-set runs") {
  const Model& m = smallModel();
  const InputWave a[1] = {wave(1, 0.4)}, b[1] = {wave(2, 0.2)}, ab[2] = {wave(1, 0.4), wave(2, 0.2)};
  const auto cfg = smallConfig(StrategyKind::PipelinedBatch2Ebe);
  const auto ra = runTimeHistory(m, cfg, a);
  const auto rb = runTimeHistory(m, cfg, b);
  const auto rab = runTimeHistory(m, cfg, ab);
  CHECK(rab.displacementHistory[0] == ra.displacementHistory[0]);
  CHECK(rab.displacementHistory[1] == rb.displacementHistory[0]);
  CHECK(rab.observations.size() == 2);
  for (const auto& t : rab.telemetry) {
    CHECK(t.residentHigh <= 2);
    CHECK(t.solverIterations.size() == 2);
  }
  CHECK_THROWS_AS(runTimeHistory(m, smallConfig(StrategyKind::Pipelined), ab), InputError);
}

TEST_CASE("internal force matches the constitutive states") {
  const Model& m = smallModel();
  EngineOptions opt;
  Engine eng(m, opt);
  const InputWave w = wave(3, 0.6);
  BoundaryForcing bf(m, w, 30);
  TimeState st(m.nDofs());
  std::vector<double> f(m.nDofs());
  bf.force(0, f);
  initialAcceleration(m.mass, m.dashpot, st, f);
  TimeState* ptr[1] = {&st};
  for (std::size_t i = 1; i < 30; ++i) {
    bf.force(i, f);
    const std::span<const double> fs[1] = {f};
    eng.step(ptr, fs);
  }
  const auto q = internalForceFromStates(m, eng.store(0).states(), st.u);
  CHECK(relL2(st.q, q) <= 1e-9);
  CHECK(eng.hbar(0) > 0);
  CHECK(eng.rayleigh(0).alpha > 0);
}

TEST_CASE("fast capacity is enforced") {
  const Model& m = smallModel();
  EngineOptions opt;
  opt.strategy = StrategyKind::Pipelined;
  opt.partitionElements = 10;
  Engine probe(m, opt);
  const std::size_t need = probe.arena().used();
  opt.fastCapacityBytes = need - 1;
  CHECK_THROWS_AS(Engine(m, opt), CapacityError);
  opt.fastCapacityBytes = need;
  Engine fits(m, opt);
  CHECK(fits.arena().used() == need);
  // Slow-only keeps nothing in the fast tier.
  opt.strategy = StrategyKind::SlowOnly;
  opt.fastCapacityBytes = 0;
  CHECK_NOTHROW(Engine(m, opt));
}

TEST_CASE("batched EBE keeps less in the fast tier than the CRS pipeline") {
  const Model& m = smallModel();
  EngineOptions opt;
  opt.partitionElements = 10;
  opt.strategy = StrategyKind::Pipelined;
  Engine p(m, opt);
  opt.strategy = StrategyKind::PipelinedBatch2Ebe;
  Engine b1(m, opt, 1);
  CHECK(b1.arena().used() < p.arena().used());
}

TEST_CASE("engine rejects bad set counts") {
  const Model& m = smallModel();
  EngineOptions opt;
  CHECK_THROWS_AS(Engine(m, opt, 2), InputError);
  CHECK_THROWS_AS(Engine(m, opt, 3), InputError);
}

TEST_CASE("linear regime scales with input amplitude") {
  RunConfig cfg = smallConfig(StrategyKind::SlowOnly);
  for (auto& mat : cfg.materials) mat.linear = true;
  const Model m = buildModel(cfg.mesh, cfg.materials, cfg.side, cfg.fmax);
  const InputWave a[1] = {wave(8, 0.2)}, b[1] = {wave(8, 0.1)};
  const auto ra = runTimeHistory(m, cfg, a);
  const auto rb = runTimeHistory(m, cfg, b);
  auto half = ra.displacementHistory[0];
  for (double& v : half) v *= 0.5;
  CHECK(relL2(rb.displacementHistory[0], half) <= 5e-3);
}
