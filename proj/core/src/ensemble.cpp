#include "tierfem/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "tierfem/byteio.hpp"
#include "tierfem/errors.hpp"

namespace tierfem {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kCaseVersion = 1;
constexpr std::uint32_t kDatasetVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void putString(byteio::Writer& w, const std::string& s) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
  w.bytes(s);
}

std::string getString(byteio::Reader& r) { return r.str(r.get<std::uint32_t>()); }

void putSeries(byteio::Writer& w, const std::vector<double>& v) {
  for (double x : v) w.put(x);
}

std::vector<double> getSeries(byteio::Reader& r, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = r.get<double>();
  return v;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t checksum(const std::vector<double>& v) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(v.size() * 8);
  byteio::Writer w(bytes);
  putSeries(w, v);
  return byteio::fnv1a64(bytes.data(), bytes.size());
}

fs::path casePath(const fs::path& dir, std::uint64_t id) { return dir / "cases" / ("case_" + std::to_string(id) + ".bin"); }

nlohmann::json readManifest(const fs::path& dir) {
  const fs::path p = dir / "manifest.json";
  if (!fs::exists(p)) return nullptr;
  const auto bytes = byteio::readFile(p.string());
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw InputError("corrupt ensemble manifest " + p.string() + ": " + e.what());
  }
}

void writeManifest(const fs::path& dir, const EnsembleSpec& spec, const std::set<std::uint64_t>& done) {
  nlohmann::json spj = spec;
  spj.erase("stopAfter");
  spj.erase("outputDir");
  const nlohmann::json j = {{"spec", spj}, {"completed", std::vector<std::uint64_t>(done.begin(), done.end())}};
  const std::string s = j.dump(1);
  byteio::writeFileAtomic((dir / "manifest.json").string(), std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace

void to_json(nlohmann::json& j, const EnsembleSpec& s) {
  j = {{"nCases", s.nCases},
       {"seed", s.seed},
       {"bounds", s.bounds},
       {"nt", s.nt},
       {"dt", s.dt},
       {"waveScale", s.waveScale},
       {"inputKind", s.inputKind == InputKind::Velocity ? "velocity" : "acceleration"},
       {"observations", s.observations},
       {"outputDir", s.outputDir.string()},
       {"columnBaseline", s.columnBaseline},
       {"stopAfter", s.stopAfter}};
}

void from_json(const nlohmann::json& j, EnsembleSpec& s) {
  s = EnsembleSpec{};
  s.nCases = j.value("nCases", s.nCases);
  s.seed = j.value("seed", s.seed);
  s.bounds = j.value("bounds", s.bounds);
  s.nt = j.value("nt", s.nt);
  s.dt = j.value("dt", s.dt);
  s.waveScale = j.value("waveScale", s.waveScale);
  const std::string kind = j.value("inputKind", std::string("velocity"));
  if (kind == "velocity") s.inputKind = InputKind::Velocity;
  else if (kind == "acceleration") s.inputKind = InputKind::Acceleration;
  else throw InputError("inputKind must be velocity or acceleration");
  s.observations = j.value("observations", s.observations);
  s.outputDir = j.value("outputDir", std::string());
  s.columnBaseline = j.value("columnBaseline", false);
  s.stopAfter = j.value("stopAfter", std::size_t(0));
  if (s.nCases < 1) throw InputError("nCases must be at least 1");
}

std::uint64_t caseSeed(std::uint64_t ensembleSeed, std::uint64_t id) {
  return splitmix64(ensembleSeed ^ splitmix64(id + 1));
}

InputWave caseWave(const EnsembleSpec& spec, std::uint64_t id, InputWave* generated) {
  InputWave w = generateRandomWave(caseSeed(spec.seed, id), spec.nt, spec.dt, spec.bounds);
  if (generated) *generated = w;
  if (spec.inputKind == InputKind::Acceleration)
    for (auto& c : w.samples) c = integrate(c, spec.dt);
  w.scale(spec.waveScale);
  return w;
}

// ---------------------------------------------------------------- case files

std::vector<std::uint8_t> serializeCase(const CaseRecord& r) {
  std::vector<std::uint8_t> out;
  byteio::Writer w(out);
  w.bytes("TFCR");
  w.put(kCaseVersion);
  w.put<std::uint64_t>(r.id);
  w.put<std::uint64_t>(r.seed);
  w.put<std::uint8_t>(r.ok ? 1 : 0);
  putString(w, r.error);
  putString(w, r.strategy);
  w.put(r.dt);
  w.put<std::uint64_t>(r.nt());
  w.put<std::uint64_t>(r.response.size());
  w.put<std::uint64_t>(r.baseline.size());
  for (const auto& c : r.input) putSeries(w, c);
  for (const auto& p : r.response)
    for (const auto& c : p) putSeries(w, c);
  for (const auto& p : r.baseline)
    for (const auto& c : p) putSeries(w, c);
  w.put<std::int32_t>(r.totalIterations);
  w.put<std::int32_t>(r.maxIterations);
  w.put(r.maxRelResidual);
  return out;
}

CaseRecord deserializeCase(const std::vector<std::uint8_t>& bytes) {
  byteio::Reader rd(bytes);
  if (rd.str(4) != "TFCR") throw InputError("not a case record");
  if (rd.get<std::uint32_t>() != kCaseVersion) throw InputError("unsupported case record version");
  CaseRecord r;
  r.id = rd.get<std::uint64_t>();
  r.seed = rd.get<std::uint64_t>();
  r.ok = rd.get<std::uint8_t>() != 0;
  r.error = getString(rd);
  r.strategy = getString(rd);
  r.dt = rd.get<double>();
  const auto nt = rd.get<std::uint64_t>(), np = rd.get<std::uint64_t>(), nb = rd.get<std::uint64_t>();
  if ((np + nb + 1) * 3 * nt * 8 > rd.remaining()) throw InputError("truncated case record");
  for (auto& c : r.input) c = getSeries(rd, nt);
  r.response.resize(np);
  for (auto& p : r.response)
    for (auto& c : p) c = getSeries(rd, nt);
  r.baseline.resize(nb);
  for (auto& p : r.baseline)
    for (auto& c : p) c = getSeries(rd, nt);
  r.totalIterations = rd.get<std::int32_t>();
  r.maxIterations = rd.get<std::int32_t>();
  r.maxRelResidual = rd.get<double>();
  return r;
}

// ---------------------------------------------------------------- scheduler

std::vector<CaseRecord> loadEnsemble(const fs::path& dir) {
  const auto man = readManifest(dir);
  if (man.is_null()) throw InputError("no ensemble manifest in " + dir.string());
  std::vector<CaseRecord> out;
  for (auto id : man.at("completed").get<std::vector<std::uint64_t>>())
    out.push_back(deserializeCase(byteio::readFile(casePath(dir, id).string())));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

std::vector<CaseRecord> runEnsemble(const Model& model, const RunConfig& base, const EnsembleSpec& spec) {
  if (spec.nCases < 1) throw InputError("nCases must be at least 1");
  if (spec.outputDir.empty()) throw InputError("ensemble needs an output directory");
  fs::create_directories(spec.outputDir / "cases");

  std::set<std::uint64_t> done;
  if (const auto man = readManifest(spec.outputDir); !man.is_null()) {
    nlohmann::json mine = spec;
    mine.erase("stopAfter");
    mine.erase("outputDir");
    if (man.at("spec") != mine) throw InputError("output directory holds a different ensemble");
    for (auto id : man.at("completed").get<std::vector<std::uint64_t>>()) done.insert(id);
  }

  RunConfig cfg = base;
  cfg.nt = spec.nt;
  cfg.dt = spec.dt;
  cfg.observations = spec.observations;
  cfg.keepDisplacementHistory = false;
  cfg.keepSurfaceField = false;
  const std::size_t batch = cfg.engine.strategy == StrategyKind::PipelinedBatch2Ebe ? 2 : 1;
  const std::size_t np = spec.observations.size();

  std::vector<std::uint64_t> pending;
  for (std::uint64_t id = 0; id < spec.nCases; ++id)
    if (!done.count(id)) pending.push_back(id);

  auto finish = [&](CaseRecord& r) {
    byteio::writeFileAtomic(casePath(spec.outputDir, r.id).string(), serializeCase(r));
    done.insert(r.id);
    writeManifest(spec.outputDir, spec, done);
  };
  auto blank = [&](std::uint64_t id) {
    CaseRecord r;
    r.id = id;
    r.seed = caseSeed(spec.seed, id);
    r.strategy = strategyName(cfg.engine.strategy);
    r.dt = spec.dt;
    return r;
  };

  // Runs a group of one or two cases; a failed pair is retried one by one.
  std::function<void(std::vector<std::uint64_t>)> runGroup = [&](std::vector<std::uint64_t> ids) {
    std::vector<InputWave> waves, generated(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) waves.push_back(caseWave(spec, ids[k], &generated[k]));
    std::vector<CaseRecord> recs;
    try {
      const RunResult res = runTimeHistory(model, cfg, waves);
      for (std::size_t s = 0; s < ids.size(); ++s) {
        CaseRecord r = blank(ids[s]);
        r.input = generated[s].samples;
        for (std::size_t p = 0; p < np; ++p) r.response.push_back(res.observations[s * np + p].v);
        for (const auto& t : res.telemetry) {
          const int it = t.solverIterations.at(s);
          r.totalIterations += it;
          r.maxIterations = std::max(r.maxIterations, it);
        }
        r.maxRelResidual = res.maxRelResidual[s];
        if (spec.columnBaseline) {
          ColumnOptions co;
          co.fmin = cfg.engine.rayleighFmin;
          co.fmax = cfg.engine.rayleighFmax;
          for (const auto& op : spec.observations) {
            const auto col = run1dColumn(extractColumnMesh(model.meshConfig, op.x, op.y), model.materials, waves[s],
                                         spec.nt, co);
            r.baseline.push_back({col.surfaceVelocity(0), col.surfaceVelocity(1), col.surfaceVelocity(2)});
          }
        }
        recs.push_back(std::move(r));
      }
    } catch (const std::exception& e) {
      if (ids.size() > 1) {
        for (auto id : ids) runGroup({id});
        return;
      }
      CaseRecord r = blank(ids[0]);
      r.ok = false;
      r.error = e.what();
      r.input = generated[0].samples;
      recs.push_back(std::move(r));
    }
    for (auto& r : recs) finish(r);
  };

  for (std::size_t k = 0; k < pending.size();) {
    if (spec.stopAfter && done.size() >= spec.stopAfter) break;
    std::size_t take = std::min(batch, pending.size() - k);
    if (spec.stopAfter) take = std::min(take, spec.stopAfter - done.size());
    runGroup(std::vector<std::uint64_t>(pending.begin() + k, pending.begin() + k + take));
    k += take;
  }
  return loadEnsemble(spec.outputDir);
}

// ---------------------------------------------------------------- dataset

Dataset datasetFromRecords(const std::vector<CaseRecord>& records, const EnsembleSpec& spec) {
  Dataset d;
  std::vector<const CaseRecord*> ok;
  for (const auto& r : records)
    if (r.ok) ok.push_back(&r);
  if (ok.empty()) throw InputError("no successful cases to export");
  std::sort(ok.begin(), ok.end(), [](auto* a, auto* b) { return a->id < b->id; });
  d.dt = ok[0]->dt;
  d.nt = ok[0]->nt();
  d.nPoints = ok[0]->response.size();
  d.nCases = ok.size();
  const bool withBaseline = !ok[0]->baseline.empty();
  for (const auto* r : ok) {
    if (r->nt() != d.nt || r->response.size() != d.nPoints || r->baseline.empty() == withBaseline)
      throw InputError("case " + std::to_string(r->id) + " does not match the ensemble shape");
    d.caseIds.push_back(r->id);
    for (const auto& c : r->input) d.inputs.insert(d.inputs.end(), c.begin(), c.end());
    for (const auto& p : r->response)
      for (const auto& c : p) {
        if (c.size() != d.nt) throw InputError("inconsistent response length");
        d.targets.insert(d.targets.end(), c.begin(), c.end());
      }
    for (const auto& p : r->baseline)
      for (const auto& c : p) d.baseline.insert(d.baseline.end(), c.begin(), c.end());
  }
  for (double v : d.targets)
    if (!std::isfinite(v)) throw InputError("non-finite response value");
  nlohmann::json meta = spec;
  meta.erase("outputDir");
  meta.erase("stopAfter");
  meta.erase("nCases");
  std::vector<int> iters;
  for (const auto* r : ok) iters.push_back(r->totalIterations);
  d.header = {{"ensemble", meta}, {"strategy", ok[0]->strategy}, {"solverIterations", iters},
              {"units", {{"inputs", "generated units"}, {"targets", "m/s"}}}};
  return d;
}

std::vector<std::uint8_t> serializeDataset(const Dataset& d) {
  struct Arr {
    const char* name;
    const std::vector<double>* data;
    std::vector<std::size_t> shape;
  };
  std::vector<Arr> arrays = {{"inputs", &d.inputs, {d.nCases, 3, d.nt}},
                             {"targets", &d.targets, {d.nCases, d.nPoints, 3, d.nt}}};
  if (!d.baseline.empty()) arrays.push_back({"baseline", &d.baseline, {d.nCases, d.nPoints, 3, d.nt}});
  nlohmann::json h = d.header;
  h["format"] = "TFDS";
  h["version"] = kDatasetVersion;
  h["dt"] = d.dt;
  h["nCases"] = d.nCases;
  h["nPoints"] = d.nPoints;
  h["nt"] = d.nt;
  h["caseIds"] = d.caseIds;
  h["arrays"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& a : arrays) {
    std::size_t n = 1;
    for (auto s : a.shape) n *= s;
    if (n != a.data->size()) throw InputError(std::string("dataset array '") + a.name + "' does not match its shape");
    h["arrays"].push_back({{"name", a.name}, {"dtype", "<f8"}, {"shape", a.shape}, {"offset", offset},
                           {"fnv1a64", hex(checksum(*a.data))}});
    offset += n * 8;
  }
  std::string text = h.dump();
  while ((16 + text.size()) % 8) text.push_back(' ');

  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + offset);
  byteio::Writer w(out);
  w.bytes("TFDS");
  w.put(kDatasetVersion);
  w.put<std::uint64_t>(text.size());
  w.bytes(text);
  for (const auto& a : arrays) putSeries(w, *a.data);
  return out;
}

Dataset deserializeDataset(const std::vector<std::uint8_t>& bytes) {
  byteio::Reader rd(bytes);
  if (rd.str(4) != "TFDS") throw InputError("not a dataset archive");
  if (rd.get<std::uint32_t>() != kDatasetVersion) throw InputError("unsupported dataset version");
  const auto hlen = rd.get<std::uint64_t>();
  if (hlen > rd.remaining()) throw InputError("truncated dataset header");
  Dataset d;
  try {
    d.header = nlohmann::json::parse(rd.str(hlen));
    d.dt = d.header.at("dt").get<double>();
    d.nCases = d.header.at("nCases").get<std::size_t>();
    d.nPoints = d.header.at("nPoints").get<std::size_t>();
    d.nt = d.header.at("nt").get<std::size_t>();
    d.caseIds = d.header.at("caseIds").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad dataset header: ") + e.what());
  }
  const std::size_t base = 16 + hlen;
  for (const auto& a : d.header.at("arrays")) {
    const auto name = a.at("name").get<std::string>();
    std::size_t n = 1;
    for (auto s : a.at("shape").get<std::vector<std::size_t>>()) n *= s;
    const std::size_t off = base + a.at("offset").get<std::size_t>();
    if (off + n * 8 > bytes.size()) throw InputError("dataset array '" + name + "' is truncated");
    byteio::Reader ar(bytes.data() + off, n * 8);
    std::vector<double> v = getSeries(ar, n);
    if (hex(checksum(v)) != a.at("fnv1a64").get<std::string>())
      throw InputError("dataset array '" + name + "' fails its checksum");
    if (name == "inputs") d.inputs = std::move(v);
    else if (name == "targets") d.targets = std::move(v);
    else if (name == "baseline") d.baseline = std::move(v);
  }
  for (const char* k : {"format", "version", "dt", "nCases", "nPoints", "nt", "caseIds", "arrays"}) d.header.erase(k);
  if (d.inputs.size() != d.nCases * 3 * d.nt || d.targets.size() != d.nCases * d.nPoints * 3 * d.nt)
    throw InputError("dataset arrays do not match the header shape");
  return d;
}

void exportDataset(const Dataset& d, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  byteio::writeFileAtomic(path.string(), serializeDataset(d));
}

Dataset importDataset(const fs::path& path) { return deserializeDataset(byteio::readFile(path.string())); }

}  // namespace tierfem
