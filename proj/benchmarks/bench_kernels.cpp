#include <benchmark/benchmark.h>

#include <random>

#include "tierfem/engine.hpp"
#include "tierfem/sparse.hpp"

using namespace tierfem;

namespace {

const Model& model() {
  static const Model m = [] {
    MeshConfig c;
    c.Lx = c.Ly = 60;
    c.Lz = 30;
    c.nx = c.ny = 8;
    c.nz = 4;
    c.interfaces = {InterfaceSpec::flat(-15)};
    return buildModel(c, defaultMaterials());
  }();
  return m;
}

std::vector<ElementTangents> tangents() {
  const Model& m = model();
  std::vector<ElementTangents> D(m.nElements());
  for (std::size_t e = 0; e < D.size(); ++e) D[e] = initialTangents(m, e);
  return D;
}

std::vector<double> randomVec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0, 1e-4);
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

const OperatorScales kScales = OperatorScales::make(NewmarkCoeffs::make(0.005), {0.4, 2e-3});

void BM_CrsMatvec(benchmark::State& state) {
  const auto D = tangents();
  const auto A = assembleBlockCrs(model(), D, kScales);
  const auto x = randomVec(model().nDofs(), 1);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    A.multiply(x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["dofs"] = static_cast<double>(x.size());
}
BENCHMARK(BM_CrsMatvec)->Unit(benchmark::kMillisecond);

void BM_EbeMatvec(benchmark::State& state) {
  const auto D = tangents();
  EbeOperator op(model(), state.range(0) != 0);
  const auto x = randomVec(model().nDofs(), 1);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    op.apply(D, kScales, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_EbeMatvec)->Arg(0)->Arg(1)->ArgName("atomic")->Unit(benchmark::kMillisecond);

void BM_EbeBatchedMatvec(benchmark::State& state) {
  const auto D = tangents();
  EbeOperator op(model());
  const auto x1 = randomVec(model().nDofs(), 1), x2 = randomVec(model().nDofs(), 2);
  std::vector<double> y1(x1.size()), y2(x1.size());
  for (auto _ : state) {
    op.applyBatched(D, D, kScales, kScales, x1, x2, y1, y2);
    benchmark::DoNotOptimize(y1.data());
  }
}
BENCHMARK(BM_EbeBatchedMatvec)->Unit(benchmark::kMillisecond);

// One element's four evaluation points with 150 springs each.
void BM_MultispringElement(benchmark::State& state) {
  const Model& m = model();
  const auto du = randomVec(m.nDofs(), 3);
  ElementMaterialState st{};
  ElementTangents D;
  ElementForces dq;
  double h = 0;
  std::size_t e = 0;
  while (m.material(e).linear) ++e;
  for (auto _ : state) {
    multispringElement(m, e, st, du, D, dq, h);
    benchmark::DoNotOptimize(dq.data());
  }
}
BENCHMARK(BM_MultispringElement)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
