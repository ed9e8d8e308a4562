#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "run.hpp"

namespace tierfem {

/// How generated samples become the incident bedrock velocity.
enum class InputKind { Velocity, Acceleration };

struct EnsembleSpec {
  std::size_t nCases = 16;
  std::uint64_t seed = 1;
  std::array<double, 3> bounds{0.6, 0.6, 0.3};
  std::size_t nt = 400;
  double dt = 0.005;
  /// m/s (or m/s^2) per generated unit.
  double waveScale = 1.0;
  InputKind inputKind = InputKind::Velocity;
  std::vector<ObservationPoint> observations;
  std::filesystem::path outputDir;
  /// Also run the 1D column under each observation point.
  bool columnBaseline = false;
  /// Return after this many cases are on disk (0: run to the end). Simulates an interruption.
  std::size_t stopAfter = 0;
};

void to_json(nlohmann::json& j, const EnsembleSpec& s);
void from_json(const nlohmann::json& j, EnsembleSpec& s);

struct CaseRecord {
  std::uint64_t id = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::string strategy;
  double dt = 0;
  std::array<std::vector<double>, 3> input;                   // generated samples
  std::vector<std::array<std::vector<double>, 3>> response;   // per point: velocity
  std::vector<std::array<std::vector<double>, 3>> baseline;   // per point: 1D column velocity
  int totalIterations = 0;
  int maxIterations = 0;
  double maxRelResidual = 0;

  std::size_t nt() const { return input[0].size(); }
};

std::vector<std::uint8_t> serializeCase(const CaseRecord& r);
CaseRecord deserializeCase(const std::vector<std::uint8_t>& bytes);

/// Seed of case id; independent of how the ensemble is split or resumed.
std::uint64_t caseSeed(std::uint64_t ensembleSeed, std::uint64_t id);
/// The incident velocity fed to the model for one case.
InputWave caseWave(const EnsembleSpec& spec, std::uint64_t id, InputWave* generated = nullptr);

/// Runs all cases not yet recorded in spec.outputDir. Under the two-set strategy
/// pending cases go two at a time. Failing cases are recorded and skipped.
/// Returns every record on disk, ordered by id.
std::vector<CaseRecord> runEnsemble(const Model& model, const RunConfig& base, const EnsembleSpec& spec);
std::vector<CaseRecord> loadEnsemble(const std::filesystem::path& dir);

// ---- dataset archive
//
// Little-endian file:
//   "TFDS"  u32 version  u64 headerBytes  header (JSON, space padded so the data
//   starts on an 8-byte boundary)  f64 arrays at the offsets the header lists.
// Arrays: inputs [nCases, 3, nt], targets [nCases, nPoints, 3, nt] and, if
// present, baseline [nCases, nPoints, 3, nt]. Each array entry carries its
// shape, byte offset and FNV-1a 64 checksum (hex). Failed cases are left out.

struct Dataset {
  double dt = 0;
  std::size_t nCases = 0, nPoints = 0, nt = 0;
  std::vector<std::uint64_t> caseIds;
  std::vector<double> inputs, targets, baseline;
  nlohmann::json header;
};

Dataset datasetFromRecords(const std::vector<CaseRecord>& records, const EnsembleSpec& spec);
std::vector<std::uint8_t> serializeDataset(const Dataset& d);
Dataset deserializeDataset(const std::vector<std::uint8_t>& bytes);
void exportDataset(const Dataset& d, const std::filesystem::path& path);
Dataset importDataset(const std::filesystem::path& path);

}  // namespace tierfem
