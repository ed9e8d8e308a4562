// tierfem: command-line front end.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "tierfem/config.hpp"
#include "tierfem/errors.hpp"
#include "tierfem/postproc.hpp"

using namespace tierfem;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kOther = 1, kInput = 2, kSolver = 3, kCapacity = 4, kTransfer = 5 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<std::size_t> partitionElems;
  std::optional<std::size_t> fastCapacity;
  std::optional<double> bandwidth, latency;
  std::optional<bool> deterministic;
};

RunFile defaultRunFile() {
  RunFile f;
  f.run.mesh.Lx = f.run.mesh.Ly = 60;
  f.run.mesh.Lz = 30;
  f.run.mesh.nx = f.run.mesh.ny = 12;
  f.run.mesh.nz = 6;
  f.run.mesh.interfaces = {InterfaceSpec::flat(-15)};
  f.run.observations = {{"center", 30, 30}};
  f.wave.scale = 0.1;
  return f;
}

RunFile load(const Globals& g) {
  RunFile f = g.config.empty() ? defaultRunFile() : loadRunFile(g.config);
  auto& e = f.run.engine;
  if (g.strategy) e.strategy = parseStrategy(*g.strategy);
  if (g.partitionElems) e.partitionElements = *g.partitionElems;
  if (g.fastCapacity) e.fastCapacityBytes = *g.fastCapacity;
  if (g.bandwidth) e.channel.bandwidth = *g.bandwidth;
  if (g.latency) e.channel.latency = *g.latency;
  if (g.deterministic) e.deterministic = *g.deterministic;
  if (g.seed) {
    f.wave.seed = *g.seed;
    if (f.ensemble) f.ensemble->seed = *g.seed;
  }
  return f;
}

void writeMap(const Model& m, const RunResult& r, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(10);
  out << "node,x,y,maxNorm,maxX\n";
  for (std::size_t j = 0; j < r.surfaceNodes.size(); ++j) {
    const auto& p = m.mesh.nodes[r.surfaceNodes[j]];
    out << r.surfaceNodes[j] << ',' << p[0] << ',' << p[1] << ',' << r.maxVelocityNorm[0][j] << ','
        << r.maxVelocityX[0][j] << '\n';
  }
}

int cmdMesh(const Globals& g, const std::string& out) {
  const RunFile f = load(g);
  const Mesh mesh = generateLayeredBoxMesh(f.run.mesh, f.run.materials, f.run.fmax);
  std::printf("nodes %zu elements %zu elements/wavelength %.2f\n", mesh.nodeCount(), mesh.elementCount(),
              mesh.elementsPerWavelength);
  if (!out.empty()) writeMesh(mesh, out);
  return kOk;
}

int cmdRun(const Globals& g, const std::string& outDir, const std::string& profile) {
  const RunFile f = load(g);
  const Model model = buildModel(f.run.mesh, f.run.materials, f.run.side, f.run.fmax);
  const InputWave w[1] = {makeWave(f.wave, f.run.nt, f.run.dt)};
  std::printf("elements %zu dofs %zu strategy %s\n", model.nElements(), model.nDofs(),
              strategyName(f.run.engine.strategy).c_str());
  const RunResult r = runTimeHistory(model, f.run, w);
  fs::create_directories(outDir);
  writeWaveformsCsv(r, fs::path(outDir) / "waveforms.csv");
  writeTelemetryJsonl(r.telemetry, fs::path(outDir) / "telemetry.jsonl");
  writeMap(model, r, fs::path(outDir) / "surface_max.csv");
  if (!profile.empty()) {
    double ax, ay, bx, by;
    if (std::sscanf(profile.c_str(), "%lf,%lf,%lf,%lf", &ax, &ay, &bx, &by) != 4)
      throw InputError("--profile expects ax,ay,bx,by");
    const auto p = lineProfile(model.mesh, r.surfaceNodes, r.maxVelocityX[0], ax, ay, bx, by);
    writeProfileCsv(p, fs::path(outDir) / "profile.csv");
  }
  std::cout << formatSummary(summarizeTelemetry(r.telemetry));
  return kOk;
}

int cmdEnsemble(const Globals& g, const std::string& outDir, const std::string& exportPath) {
  RunFile f = load(g);
  if (!f.ensemble) throw InputError("config has no ensemble section");
  EnsembleSpec spec = *f.ensemble;
  if (!outDir.empty()) spec.outputDir = outDir;
  if (spec.observations.empty()) spec.observations = f.run.observations;
  const Model model = buildModel(f.run.mesh, f.run.materials, f.run.side, f.run.fmax);
  const auto recs = runEnsemble(model, f.run, spec);
  std::size_t ok = 0;
  for (const auto& r : recs) ok += r.ok;
  std::printf("%zu cases on disk, %zu ok\n", recs.size(), ok);
  for (const auto& r : recs)
    if (!r.ok) std::printf("case %llu failed: %s\n", static_cast<unsigned long long>(r.id), r.error.c_str());
  if (!exportPath.empty()) exportDataset(datasetFromRecords(recs, spec), exportPath);
  return kOk;
}

int cmdExport(const Globals& g, const std::string& dir, const std::string& out) {
  RunFile f = load(g);
  const auto recs = loadEnsemble(dir);
  EnsembleSpec spec = f.ensemble.value_or(EnsembleSpec{});
  spec.outputDir = dir;
  if (spec.observations.empty()) spec.observations = f.run.observations;
  exportDataset(datasetFromRecords(recs, spec), out);
  std::printf("wrote %s\n", out.c_str());
  return kOk;
}

int cmdColumn(const Globals& g, double x, double y, const std::string& out) {
  const RunFile f = load(g);
  const InputWave w = makeWave(f.wave, f.run.nt, f.run.dt);
  ColumnOptions co;
  co.fmin = f.run.engine.rayleighFmin;
  co.fmax = f.run.engine.rayleighFmax;
  const auto r = run1dColumn(extractColumnMesh(f.run.mesh, x, y), f.run.materials, w, f.run.nt, co);
  std::ofstream o(out);
  if (!o) throw InputError("cannot write " + out);
  o.precision(12);
  o << "t,vx,vy,vz\n";
  const auto vx = r.surfaceVelocity(0), vy = r.surfaceVelocity(1), vz = r.surfaceVelocity(2);
  for (std::size_t i = 0; i < r.nt; ++i) o << i * r.dt << ',' << vx[i] << ',' << vy[i] << ',' << vz[i] << '\n';
  return kOk;
}

int cmdSpectra(const std::string& in, const std::string& kind, int comp, double h, const std::string& out) {
  const InputWave w = readWaveCsv(in);
  if (comp < 0 || comp > 2) throw InputError("--component must be 0, 1 or 2");
  std::vector<double> a = w.samples[comp];
  if (kind == "velocity") a = differentiate(a, w.dt);
  else if (kind != "acceleration") throw InputError("--kind must be velocity or acceleration");
  const auto s = velocityResponseSpectrum(a, w.dt, h);
  if (out.empty()) {
    for (std::size_t i = 0; i < s.periods.size(); ++i) std::printf("%.6g %.6g\n", s.periods[i], s.sv[i]);
  } else {
    writeSpectrumCsv(s, out);
  }
  return kOk;
}

int cmdReport(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::cout << formatSummary(summarizeTelemetry(in));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tierfem: nonlinear ground response with tiered constitutive memory"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config, "JSON run file");
  app.add_option("--seed", g.seed, "wave / ensemble seed");
  app.add_option("--strategy", g.strategy, "SLOW_ONLY, SOLVER_FAST, PIPELINED, PIPELINED_BATCH2_EBE or 1-4");
  app.add_option("--partition-elems", g.partitionElems, "elements per constitutive partition");
  app.add_option("--fast-capacity-bytes", g.fastCapacity, "fast tier capacity");
  app.add_option("--bandwidth", g.bandwidth, "channel bandwidth, bytes/s per direction");
  app.add_option("--latency", g.latency, "channel latency per message, s");
  app.add_flag("--deterministic,!--no-deterministic", g.deterministic, "colored (default) or atomic scatter");

  std::string out, runDir, ensDir, dsDir, profile, exportPath, input, kind = "acceleration";
  double x = 0, y = 0, h = 0.05;
  int comp = 0;

  auto* mesh = app.add_subcommand("mesh", "generate the mesh and report its size");
  mesh->add_option("-o,--out", out, "binary mesh file");
  auto* run = app.add_subcommand("run", "one time-history analysis");
  run->add_option("-o,--out", runDir, "output directory")->default_val("run_out");
  run->add_option("--profile", profile, "line ax,ay,bx,by for a max |v_x| profile");
  auto* ens = app.add_subcommand("ensemble", "random-wave ensemble");
  ens->add_option("-o,--out", ensDir, "ensemble directory (overrides the config)");
  ens->add_option("--export", exportPath, "write the dataset archive here when done");
  auto* col = app.add_subcommand("column1d", "1D column under (x, y)");
  col->add_option("--x", x)->required();
  col->add_option("--y", y)->required();
  col->add_option("-o,--out", out, "CSV of surface velocity (default column.csv)");
  auto* spec = app.add_subcommand("spectra", "velocity response spectrum of a wave CSV");
  spec->add_option("-i,--input", input)->required();
  spec->add_option("--kind", kind, "velocity or acceleration")->default_val("acceleration");
  spec->add_option("--component", comp)->default_val(0);
  spec->add_option("--damping", h, "damping ratio")->default_val(0.05);
  spec->add_option("-o,--out", out);
  auto* rep = app.add_subcommand("report", "summarize a telemetry JSON-lines file");
  rep->add_option("telemetry", input)->required();
  auto* exp = app.add_subcommand("export-dataset", "pack an ensemble directory into a dataset archive");
  exp->add_option("--dir", dsDir)->required();
  exp->add_option("-o,--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  try {
    if (*mesh) return cmdMesh(g, out);
    if (*run) return cmdRun(g, runDir, profile);
    if (*ens) return cmdEnsemble(g, ensDir, exportPath);
    if (*col) return cmdColumn(g, x, y, out.empty() ? "column.csv" : out);
    if (*spec) return cmdSpectra(input, kind, comp, h, out);
    if (*rep) return cmdReport(input);
    if (*exp) return cmdExport(g, dsDir, out);
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kInput;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return kSolver;
  } catch (const CapacityError& e) {
    std::fprintf(stderr, "capacity error: %s\n", e.what());
    return kCapacity;
  } catch (const TransferError& e) {
    std::fprintf(stderr, "transfer error: %s\n", e.what());
    return kTransfer;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kOther;
}
