#include <filesystem>

#include "doctest.h"
#include "tierfem/byteio.hpp"
#include "tierfem/ensemble.hpp"
#include "tierfem/errors.hpp"

using namespace tierfem;
namespace fs = std::filesystem;

namespace {

RunConfig baseConfig(StrategyKind k) {
  RunConfig cfg;
  cfg.mesh.Lx = cfg.mesh.Ly = 20;
  cfg.mesh.Lz = 10;
  cfg.mesh.nx = cfg.mesh.ny = 2;
  cfg.mesh.nz = 2;
  cfg.mesh.interfaces = {InterfaceSpec::flat(-5)};
  cfg.engine.strategy = k;
  cfg.engine.partitionElements = 12;
  return cfg;
}

const Model& model() {
  static const Model m = [] {
    const auto c = baseConfig(StrategyKind::SlowOnly);
    return buildModel(c.mesh, c.materials, c.side, c.fmax);
  }();
  return m;
}

EnsembleSpec spec(const fs::path& dir, std::size_t n = 5) {
  EnsembleSpec s;
  s.nCases = n;
  s.seed = 11;
  s.nt = 160;
  s.waveScale = 0.5;
  s.observations = {{"center", 10, 10}, {"corner", 0, 0}};
  s.outputDir = dir;
  return s;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("tierfem_ens_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("case seeds and waves are reproducible") {
  const auto s = spec("unused");
  CHECK(caseSeed(11, 3) == caseSeed(11, 3));
  CHECK(caseSeed(11, 3) != caseSeed(11, 4));
  CHECK(caseSeed(11, 3) != caseSeed(12, 3));
  InputWave g;
  const auto w = caseWave(s, 2, &g);
  CHECK(w.samples[0][17] == doctest::Approx(0.5 * g.samples[0][17]));
}

TEST_CASE("case record round trip") {
  CaseRecord r;
  r.id = 9;
  r.seed = 77;
  r.strategy = "SLOW_ONLY";
  r.dt = 0.005;
  for (auto& c : r.input) c = {1.0, 2.0, 3.0};
  r.response.push_back({std::vector<double>{4, 5, 6}, std::vector<double>{7, 8, 9}, std::vector<double>{0, 1, 2}});
  r.totalIterations = 33;
  r.maxRelResidual = 1e-9;
  const auto b = serializeCase(r);
  const auto back = deserializeCase(b);
  CHECK(serializeCase(back) == b);
  CHECK(back.response[0][1][2] == 9.0);
  auto cut = b;
  cut.resize(b.size() - 20);
  CHECK_THROWS_AS(deserializeCase(cut), InputError);
}

TEST_CASE("ensemble determinism and resume give identical archives") {
  const auto d1 = scratch("a"), d2 = scratch("b");
  const auto cfg = baseConfig(StrategyKind::SlowOnly);
  const auto r1 = runEnsemble(model(), cfg, spec(d1));
  CHECK(r1.size() == 5);
  for (const auto& r : r1) CHECK(r.ok);

  auto interrupted = spec(d2);
  interrupted.stopAfter = 2;
  CHECK(runEnsemble(model(), cfg, interrupted).size() == 2);
  const auto before = fs::last_write_time(d2 / "cases" / "case_1.bin");
  const auto r2 = runEnsemble(model(), cfg, spec(d2));
  CHECK(r2.size() == 5);
  CHECK(fs::last_write_time(d2 / "cases" / "case_1.bin") == before);

  const auto a = serializeDataset(datasetFromRecords(r1, spec(d1)));
  const auto b = serializeDataset(datasetFromRecords(r2, spec(d2)));
  CHECK(a == b);

  // A different ensemble may not reuse the directory.
  auto other = spec(d1);
  other.seed = 12;
  CHECK_THROWS_AS(runEnsemble(model(), cfg, other), InputError);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("batched pairs equal sequential cases") {
  const auto d1 = scratch("seq"), d2 = scratch("pair");
  const auto seq = runEnsemble(model(), baseConfig(StrategyKind::PipelinedBatch2Ebe), [&] {
    auto s = spec(d1, 3);
    return s;
  }());
  // Same strategy, one case per engine: run cases one at a time through stopAfter.
  auto solo = spec(d2, 3);
  std::vector<CaseRecord> one;
  for (std::size_t k = 1; k <= 3; ++k) {
    solo.stopAfter = k;
    one = runEnsemble(model(), baseConfig(StrategyKind::PipelinedBatch2Ebe), solo);
  }
  REQUIRE(seq.size() == 3);
  REQUIRE(one.size() == 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 2; ++p)
      for (int d = 0; d < 3; ++d) CHECK(seq[c].response[p][d] == one[c].response[p][d]);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("failed cases are recorded and skipped in the archive") {
  const auto d = scratch("fail");
  auto cfg = baseConfig(StrategyKind::SlowOnly);
  cfg.engine.cg.maxIterations = 1;
  const auto recs = runEnsemble(model(), cfg, spec(d, 2));
  REQUIRE(recs.size() == 2);
  CHECK_FALSE(recs[0].ok);
  CHECK(!recs[0].error.empty());
  CHECK_THROWS_AS(datasetFromRecords(recs, spec(d, 2)), InputError);
  fs::remove_all(d);
}

TEST_CASE("dataset archive layout, round trip and corruption") {
  const auto d = scratch("ds");
  auto s = spec(d, 2);
  s.columnBaseline = true;
  const auto recs = runEnsemble(model(), baseConfig(StrategyKind::SlowOnly), s);
  const Dataset ds = datasetFromRecords(recs, s);
  CHECK(ds.inputs.size() == 2 * 3 * 160);
  CHECK(ds.targets.size() == 2 * 2 * 3 * 160);
  CHECK(ds.baseline.size() == ds.targets.size());
  exportDataset(ds, d / "data.tfds");
  const auto bytes = byteio::readFile((d / "data.tfds").string());
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TFDS");
  byteio::Reader rd(bytes);
  rd.str(4);
  CHECK(rd.get<std::uint32_t>() == 1);
  const auto hlen = rd.get<std::uint64_t>();
  CHECK((16 + hlen) % 8 == 0);
  const auto h = nlohmann::json::parse(rd.str(hlen));
  CHECK(h.at("arrays")[1].at("shape") == std::vector<std::size_t>{2, 2, 3, 160});
  // Targets of case 0, point 1, component 2, sample 5 at the documented place.
  const std::size_t off = 16 + hlen + h.at("arrays")[1].at("offset").get<std::size_t>();
  byteio::Reader at(bytes.data() + off + 8 * (((0 * 2 + 1) * 3 + 2) * 160 + 5), 8);
  CHECK(at.get<double>() == recs[0].response[1][2][5]);

  const Dataset back = importDataset(d / "data.tfds");
  CHECK(serializeDataset(back) == bytes);
  CHECK(back.caseIds == std::vector<std::uint64_t>{0, 1});

  auto bad = bytes;
  bad[bad.size() - 3] ^= 0x40;
  CHECK_THROWS_AS(deserializeDataset(bad), InputError);
  bad = bytes;
  bad.resize(bytes.size() - 8);
  CHECK_THROWS_AS(deserializeDataset(bad), InputError);
  fs::remove_all(d);
}
