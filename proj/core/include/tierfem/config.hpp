#pragma once

#include <array>
#include <filesystem>
#include <optional>

#include "ensemble.hpp"
#include "json.hpp"
#include "run.hpp"

namespace tierfem {

/// Where a run's input motion comes from.
struct WaveSource {
  std::filesystem::path file;         // CSV; empty means random
  std::uint64_t seed = 1;
  std::array<double, 3> bounds{0.6, 0.6, 0.3};
  double scale = 1.0;
  InputKind kind = InputKind::Velocity;
  std::optional<std::array<double, 4>> bandpass;
};

/// Loads or generates the wave, applies bandpass, integration and scale.
InputWave makeWave(const WaveSource& src, std::size_t nt, double dt);

struct RunFile {
  RunConfig run;
  WaveSource wave;
  std::optional<EnsembleSpec> ensemble;
};

void to_json(nlohmann::json& j, const EngineOptions& o);
void from_json(const nlohmann::json& j, EngineOptions& o);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
void to_json(nlohmann::json& j, const WaveSource& w);
void from_json(const nlohmann::json& j, WaveSource& w);

/// Unknown keys are rejected so typos do not silently fall back to defaults.
RunFile parseRunFile(const nlohmann::json& j);
RunFile loadRunFile(const std::filesystem::path& path);
nlohmann::json toJson(const RunFile& f);

}  // namespace tierfem
