#include "tierfem/run.hpp"

#include <cmath>
#include <fstream>

#include "tierfem/errors.hpp"

namespace tierfem {

void to_json(nlohmann::json& j, const ObservationPoint& p) { j = {{"name", p.name}, {"x", p.x}, {"y", p.y}}; }

void from_json(const nlohmann::json& j, ObservationPoint& p) {
  p.name = j.value("name", std::string("p"));
  p.x = j.at("x").get<double>();
  p.y = j.at("y").get<double>();
}

BoundaryForcing::BoundaryForcing(const Model& model, const InputWave& wave, std::size_t nt, double fmin, double fmax)
    : model_(model), wave_(wave) {
  ColumnOptions opt;
  opt.fmin = fmin;
  opt.fmax = fmax;
  for (const auto& col : model.sideColumns) columns_.push_back(run1dColumn(col, model.materials, wave, nt, opt));
}

void BoundaryForcing::force(std::size_t i, std::span<double> f) const {
  std::fill(f.begin(), f.end(), 0.0);
  const auto& cb = model_.bottomDashpot;
  for (std::size_t n = 0; n < model_.nNodes(); ++n)
    for (int d = 0; d < 3; ++d) {
      const std::size_t k = 3 * n + d;
      if (cb[k] != 0.0) f[k] += 2.0 * cb[k] * wave_.at(d, i);
    }
  for (const auto& s : model_.sideNodes) {
    const ColumnResult& c = columns_[s.column];
    const Voigt6 sg = c.stressAt(i, s.level);
    const Vec3 v = c.velocityAt(i, s.level);
    const Vec3& an = s.areaNormal;
    const Vec3 t = {sg[0] * an[0] + sg[3] * an[1] + sg[5] * an[2], sg[3] * an[0] + sg[1] * an[1] + sg[4] * an[2],
                    sg[5] * an[0] + sg[4] * an[1] + sg[2] * an[2]};
    for (int d = 0; d < 3; ++d) {
      const std::size_t k = 3 * s.node + d;
      f[k] += t[d] + model_.sideDashpot[k] * v[d];
    }
  }
}

RunResult runTimeHistory(const Model& model, const RunConfig& cfg, std::span<const InputWave> waves) {
  const std::size_t nSets = waves.size();
  if (nSets < 1 || nSets > 2) throw InputError("a run takes one or two input waves");
  if (cfg.nt < 2) throw InputError("a run needs nt >= 2");
  for (const auto& w : waves)
    if (std::abs(w.dt - cfg.dt) > 1e-12 * cfg.dt) throw InputError("wave dt does not match the run dt");
  EngineOptions eo = cfg.engine;
  eo.dt = cfg.dt;
  Engine engine(model, eo, static_cast<int>(nSets));

  const std::size_t nd = model.nDofs(), nt = cfg.nt;
  std::vector<std::unique_ptr<BoundaryForcing>> forcing;
  for (const auto& w : waves) forcing.push_back(std::make_unique<BoundaryForcing>(model, w, nt, eo.rayleighFmin, eo.rayleighFmax));

  RunResult res;
  res.dt = cfg.dt;
  res.nt = nt;
  res.surfaceNodes = model.mesh.surfaceNodes();
  const std::size_t ns = res.surfaceNodes.size();
  std::vector<std::uint32_t> obsNodes;
  for (const auto& p : cfg.observations) obsNodes.push_back(model.mesh.nearestSurfaceNode(p.x, p.y));
  for (std::size_t s = 0; s < nSets; ++s)
    for (std::size_t p = 0; p < obsNodes.size(); ++p) {
      Waveform w;
      w.name = cfg.observations[p].name;
      w.node = obsNodes[p];
      for (int d = 0; d < 3; ++d) {
        w.u[d].assign(nt, 0.0);
        w.v[d].assign(nt, 0.0);
        w.a[d].assign(nt, 0.0);
      }
      res.observations.push_back(std::move(w));
    }
  res.maxRelResidual.assign(nSets, 0.0);
  res.maxVelocityNorm.assign(nSets, std::vector<double>(ns, 0.0));
  res.maxVelocityX.assign(nSets, std::vector<double>(ns, 0.0));
  if (cfg.keepSurfaceField) res.surfaceField.assign(nSets, std::vector<double>(nt * ns * 3, 0.0));
  if (cfg.keepDisplacementHistory) res.displacementHistory.assign(nSets, std::vector<double>(nt * nd, 0.0));

  std::vector<TimeState> states(nSets, TimeState(nd));
  std::vector<std::vector<double>> f(nSets, std::vector<double>(nd));

  auto record = [&](std::size_t i) {
    for (std::size_t s = 0; s < nSets; ++s) {
      const TimeState& st = states[s];
      for (std::size_t p = 0; p < obsNodes.size(); ++p) {
        Waveform& w = res.observations[s * obsNodes.size() + p];
        for (int d = 0; d < 3; ++d) {
          const std::size_t k = 3 * w.node + d;
          w.u[d][i] = st.u[k];
          w.v[d][i] = st.v[k];
          w.a[d][i] = st.a[k];
        }
      }
      for (std::size_t j = 0; j < ns; ++j) {
        const double* v = &st.v[3 * res.surfaceNodes[j]];
        res.maxVelocityNorm[s][j] = std::max(res.maxVelocityNorm[s][j], std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
        res.maxVelocityX[s][j] = std::max(res.maxVelocityX[s][j], std::abs(v[0]));
        if (cfg.keepSurfaceField)
          for (int d = 0; d < 3; ++d) res.surfaceField[s][(i * ns + j) * 3 + d] = v[d];
      }
      if (cfg.keepDisplacementHistory) std::copy(st.u.begin(), st.u.end(), res.displacementHistory[s].begin() + i * nd);
    }
  };

  for (std::size_t s = 0; s < nSets; ++s) {
    forcing[s]->force(0, f[s]);
    initialAcceleration(model.mass, model.dashpot, states[s], f[s]);
  }
  record(0);

  std::vector<TimeState*> ptrs;
  std::vector<std::span<const double>> fs;
  for (std::size_t s = 0; s < nSets; ++s) {
    ptrs.push_back(&states[s]);
    fs.emplace_back(f[s]);
  }
  for (std::size_t i = 1; i < nt; ++i) {
    for (std::size_t s = 0; s < nSets; ++s) forcing[s]->force(i, f[s]);
    res.telemetry.push_back(engine.step(ptrs, fs));
    res.hbar.push_back(engine.hbar(0));
    for (std::size_t s = 0; s < nSets; ++s)
      res.maxRelResidual[s] = std::max(res.maxRelResidual[s], engine.lastSolve(static_cast<int>(s)).relResidual);
    record(i);
  }
  res.peakFastBytes = engine.arena().peak();
  res.finalState = std::move(states);
  return res;
}

RunResult runTimeHistory(const RunConfig& cfg, std::span<const InputWave> waves) {
  const Model model = buildModel(cfg.mesh, cfg.materials, cfg.side, cfg.fmax);
  return runTimeHistory(model, cfg, waves);
}

void writeWaveformsCsv(const RunResult& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(12);
  out << "t";
  const char* axes = "xyz";
  for (std::size_t p = 0; p < r.observations.size(); ++p)
    for (const char* q : {"u", "v", "a"})
      for (int d = 0; d < 3; ++d) out << ',' << r.observations[p].name << '_' << q << axes[d];
  out << '\n';
  for (std::size_t i = 0; i < r.nt; ++i) {
    out << i * r.dt;
    for (const auto& w : r.observations) {
      for (int d = 0; d < 3; ++d) out << ',' << w.u[d][i];
      for (int d = 0; d < 3; ++d) out << ',' << w.v[d][i];
      for (int d = 0; d < 3; ++d) out << ',' << w.a[d][i];
    }
    out << '\n';
  }
}

void writeTelemetryJsonl(const std::vector<StepTelemetry>& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& s : t) out << nlohmann::json(s).dump() << '\n';
}

}  // namespace tierfem
