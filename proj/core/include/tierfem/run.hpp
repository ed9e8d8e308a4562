#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <vector>

#include "column1d.hpp"
#include "engine.hpp"
#include "model.hpp"
#include "wave.hpp"

namespace tierfem {

struct ObservationPoint {
  std::string name;
  double x = 0, y = 0;
};
void to_json(nlohmann::json& j, const ObservationPoint& p);
void from_json(const nlohmann::json& j, ObservationPoint& p);

struct RunConfig {
  MeshConfig mesh;
  MaterialTable materials = defaultMaterials();
  SideBoundary side = SideBoundary::FreeField;
  double fmax = 2.5;
  double dt = 0.005;
  std::size_t nt = 200;
  EngineOptions engine;
  std::vector<ObservationPoint> observations;
  /// Keep u of every node at every record (for strategy comparisons).
  bool keepDisplacementHistory = false;
  /// Keep the surface velocity field for maximum-velocity maps.
  bool keepSurfaceField = true;
};

/// External force of one set at every record: the bottom input 2*C_b*v_inc and,
/// for free-field sides, sigma_ff . n A + C_side v_ff from the side columns.
class BoundaryForcing {
 public:
  BoundaryForcing(const Model& model, const InputWave& wave, std::size_t nt, double fmin = 0.2, double fmax = 2.5);
  void force(std::size_t i, std::span<double> f) const;
  const std::vector<ColumnResult>& columns() const { return columns_; }

 private:
  const Model& model_;
  const InputWave& wave_;
  std::vector<ColumnResult> columns_;
};

struct Waveform {
  std::string name;
  std::uint32_t node = 0;
  std::array<std::vector<double>, 3> u, v, a;
};

struct RunResult {
  double dt = 0;
  std::size_t nt = 0;
  std::vector<Waveform> observations;  // per set, then per point: [set * nPoints + p]
  std::vector<StepTelemetry> telemetry;
  std::vector<double> hbar;            // set 0, per step
  std::vector<double> maxRelResidual;  // per set, over all steps
  std::vector<std::uint32_t> surfaceNodes;
  /// Per set, max over time of |v| (Euclidean) and of |v_x| per surface node.
  std::vector<std::vector<double>> maxVelocityNorm, maxVelocityX;
  /// Per set, [record][node] surface velocity (3 per entry) if kept.
  std::vector<std::vector<double>> surfaceField;
  /// Per set, [record][dof] if kept.
  std::vector<std::vector<double>> displacementHistory;
  std::vector<TimeState> finalState;
  std::size_t peakFastBytes = 0;
};

/// Runs one wave (or two with the two-set strategy) through a built model.
RunResult runTimeHistory(const Model& model, const RunConfig& cfg, std::span<const InputWave> waves);
RunResult runTimeHistory(const RunConfig& cfg, std::span<const InputWave> waves);

/// One row per record: t and u,v,a of each observation point.
void writeWaveformsCsv(const RunResult& r, const std::filesystem::path& path);
void writeTelemetryJsonl(const std::vector<StepTelemetry>& t, const std::filesystem::path& path);

}  // namespace tierfem
