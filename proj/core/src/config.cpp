#include "tierfem/config.hpp"

#include <fstream>
#include <set>

#include "tierfem/errors.hpp"

namespace tierfem {

namespace {

void checkKeys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw InputError("unknown key '" + k + "' in " + where);
}

std::string sideName(SideBoundary s) { return s == SideBoundary::FreeField ? "free-field" : "dashpot"; }

}  // namespace

void to_json(nlohmann::json& j, const EngineOptions& o) {
  j = {{"strategy", strategyName(o.strategy)},
       {"partitionElements", o.partitionElements},
       {"fastCapacityBytes", o.fastCapacityBytes},
       {"channel", {{"bandwidth", o.channel.bandwidth}, {"latency", o.channel.latency}, {"realtime", o.channel.realtime}}},
       {"pipeline",
        {{"simulatedCompute", o.pipeline.simulatedCompute},
         {"directSlowAccess", o.pipeline.directSlowAccess},
         {"directAccessLatency", o.pipeline.directAccessLatency}}},
       {"deterministic", o.deterministic},
       {"cg", {{"tol", o.cg.tol}, {"maxIterations", o.cg.maxIterations}}},
       {"twoLevel",
        {{"smootherWeight", o.twoLevel.smootherWeight},
         {"coarseTol", o.twoLevel.coarseTol},
         {"coarseMaxIterations", o.twoLevel.coarseMaxIterations}}},
       {"rayleighBand", {o.rayleighFmin, o.rayleighFmax}}};
}

void from_json(const nlohmann::json& j, EngineOptions& o) {
  checkKeys(j,
            {"strategy", "partitionElements", "fastCapacityBytes", "channel", "pipeline", "deterministic", "cg",
             "twoLevel", "rayleighBand"},
            "engine");
  o = EngineOptions{};
  if (j.contains("strategy")) {
    const auto& s = j.at("strategy");
    o.strategy = parseStrategy(s.is_number() ? std::to_string(s.get<int>()) : s.get<std::string>());
  }
  o.partitionElements = j.value("partitionElements", o.partitionElements);
  o.fastCapacityBytes = j.value("fastCapacityBytes", o.fastCapacityBytes);
  if (j.contains("channel")) {
    const auto& c = j.at("channel");
    checkKeys(c, {"bandwidth", "latency", "realtime"}, "engine.channel");
    o.channel.bandwidth = c.value("bandwidth", o.channel.bandwidth);
    o.channel.latency = c.value("latency", o.channel.latency);
    o.channel.realtime = c.value("realtime", o.channel.realtime);
  }
  if (j.contains("pipeline")) {
    const auto& p = j.at("pipeline");
    checkKeys(p, {"simulatedCompute", "directSlowAccess", "directAccessLatency"}, "engine.pipeline");
    o.pipeline.simulatedCompute = p.value("simulatedCompute", o.pipeline.simulatedCompute);
    o.pipeline.directSlowAccess = p.value("directSlowAccess", o.pipeline.directSlowAccess);
    o.pipeline.directAccessLatency = p.value("directAccessLatency", o.pipeline.directAccessLatency);
  }
  o.deterministic = j.value("deterministic", o.deterministic);
  if (j.contains("cg")) {
    const auto& c = j.at("cg");
    checkKeys(c, {"tol", "maxIterations"}, "engine.cg");
    o.cg.tol = c.value("tol", o.cg.tol);
    o.cg.maxIterations = c.value("maxIterations", o.cg.maxIterations);
  }
  if (j.contains("twoLevel")) {
    const auto& t = j.at("twoLevel");
    checkKeys(t, {"smootherWeight", "coarseTol", "coarseMaxIterations"}, "engine.twoLevel");
    o.twoLevel.smootherWeight = t.value("smootherWeight", o.twoLevel.smootherWeight);
    o.twoLevel.coarseTol = t.value("coarseTol", o.twoLevel.coarseTol);
    o.twoLevel.coarseMaxIterations = t.value("coarseMaxIterations", o.twoLevel.coarseMaxIterations);
  }
  if (j.contains("rayleighBand")) {
    const auto b = j.at("rayleighBand").get<std::array<double, 2>>();
    o.rayleighFmin = b[0];
    o.rayleighFmax = b[1];
  }
  if (!(o.cg.tol > 0)) throw InputError("cg.tol must be positive");
  if (!(o.rayleighFmin > 0 && o.rayleighFmax > o.rayleighFmin)) throw InputError("rayleighBand needs 0 < fmin < fmax");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"mesh", c.mesh},       {"materials", c.materials}, {"side", sideName(c.side)},
       {"fmax", c.fmax},       {"dt", c.dt},               {"nt", c.nt},
       {"engine", c.engine},   {"observations", c.observations},
       {"keepDisplacementHistory", c.keepDisplacementHistory}, {"keepSurfaceField", c.keepSurfaceField}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  checkKeys(j,
            {"mesh", "materials", "side", "fmax", "dt", "nt", "engine", "observations", "keepDisplacementHistory",
             "keepSurfaceField"},
            "run");
  c = RunConfig{};
  c.mesh = j.at("mesh").get<MeshConfig>();
  if (j.contains("materials")) c.materials = j.at("materials").get<MaterialTable>();
  const std::string side = j.value("side", std::string("free-field"));
  if (side == "free-field") c.side = SideBoundary::FreeField;
  else if (side == "dashpot") c.side = SideBoundary::Dashpot;
  else throw InputError("side must be free-field or dashpot");
  c.fmax = j.value("fmax", c.fmax);
  c.dt = j.value("dt", c.dt);
  c.nt = j.value("nt", c.nt);
  if (j.contains("engine")) c.engine = j.at("engine").get<EngineOptions>();
  c.engine.dt = c.dt;
  c.observations = j.value("observations", c.observations);
  c.keepDisplacementHistory = j.value("keepDisplacementHistory", c.keepDisplacementHistory);
  c.keepSurfaceField = j.value("keepSurfaceField", c.keepSurfaceField);
  if (!(c.dt > 0)) throw InputError("dt must be positive");
  if (c.nt < 2) throw InputError("nt must be at least 2");
}

void to_json(nlohmann::json& j, const WaveSource& w) {
  j = {{"seed", w.seed}, {"bounds", w.bounds}, {"scale", w.scale},
       {"kind", w.kind == InputKind::Velocity ? "velocity" : "acceleration"}};
  if (!w.file.empty()) j["file"] = w.file.string();
  if (w.bandpass) j["bandpass"] = *w.bandpass;
}

void from_json(const nlohmann::json& j, WaveSource& w) {
  checkKeys(j, {"file", "seed", "bounds", "scale", "kind", "bandpass"}, "wave");
  w = WaveSource{};
  w.file = j.value("file", std::string());
  w.seed = j.value("seed", w.seed);
  w.bounds = j.value("bounds", w.bounds);
  w.scale = j.value("scale", w.scale);
  const std::string kind = j.value("kind", std::string("velocity"));
  if (kind == "velocity") w.kind = InputKind::Velocity;
  else if (kind == "acceleration") w.kind = InputKind::Acceleration;
  else throw InputError("wave.kind must be velocity or acceleration");
  if (j.contains("bandpass")) w.bandpass = j.at("bandpass").get<std::array<double, 4>>();
}

InputWave makeWave(const WaveSource& src, std::size_t nt, double dt) {
  InputWave w;
  if (src.file.empty()) {
    w = generateRandomWave(src.seed, nt, dt, src.bounds);
  } else {
    w = readWaveCsv(src.file);
    if (std::abs(w.dt - dt) > 1e-9 * dt) throw InputError("wave file dt differs from the run dt");
    for (auto& c : w.samples) c.resize(nt, 0.0);
  }
  if (src.bandpass) {
    const auto& b = *src.bandpass;
    for (auto& c : w.samples) c = bandpass(c, dt, b[0], b[1], b[2], b[3]);
  }
  if (src.kind == InputKind::Acceleration)
    for (auto& c : w.samples) c = integrate(c, dt);
  w.scale(src.scale);
  return w;
}

RunFile parseRunFile(const nlohmann::json& j) {
  checkKeys(j, {"run", "wave", "ensemble"}, "config");
  RunFile f;
  try {
    f.run = j.at("run").get<RunConfig>();
    if (j.contains("wave")) f.wave = j.at("wave").get<WaveSource>();
    if (j.contains("ensemble")) {
      f.ensemble = j.at("ensemble").get<EnsembleSpec>();
      f.ensemble->dt = f.run.dt;
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return f;
}

RunFile loadRunFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return parseRunFile(j);
}

nlohmann::json toJson(const RunFile& f) {
  nlohmann::json j = {{"run", f.run}, {"wave", f.wave}};
  if (f.ensemble) j["ensemble"] = *f.ensemble;
  return j;
}

}  // namespace tierfem
