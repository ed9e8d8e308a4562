#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "memtier.hpp"
#include "mesh.hpp"
#include "run.hpp"

namespace tierfem {

struct ResponseSpectrum {
  std::vector<double> periods;  // s
  std::vector<double> sv;       // max |relative velocity|
  double h = 0.05;
};

/// n log-spaced periods over [tmin, tmax].
std::vector<double> logPeriods(double tmin = 0.1, double tmax = 10.0, std::size_t n = 100);

/// Damped SDOF under base acceleration, integrated with average acceleration;
/// steps are subdivided (input interpolated linearly) so each period gets at
/// least 100 substeps.
ResponseSpectrum velocityResponseSpectrum(std::span<const double> accel, double dt, double h = 0.05,
                                          std::vector<double> periods = logPeriods());

/// Central differences, one-sided at the ends.
std::vector<double> differentiate(std::span<const double> x, double dt);

enum class VelocityMeasure { X, Y, Z, Norm };
VelocityMeasure parseMeasure(const std::string& s);

/// Max over time of the chosen measure per surface node (RunResult::surfaceNodes order).
/// Throws InputError if the run did not keep its surface field.
std::vector<double> maxVelocityMap(const RunResult& r, VelocityMeasure m, int set = 0);

struct MaxVelocityProfile {
  std::vector<double> position;  // distance from the line start (m)
  std::vector<double> x, y;
  std::vector<double> value;
};

/// Samples a surface map along the segment A-B at the nearest surface nodes.
MaxVelocityProfile lineProfile(const Mesh& mesh, std::span<const std::uint32_t> surfaceNodes,
                               std::span<const double> map, double ax, double ay, double bx, double by,
                               std::size_t samples = 50);

struct TelemetrySummary {
  std::string strategy;
  std::size_t steps = 0;
  double solver = 0, crsUpdate = 0, compute = 0, transfer = 0, transferUp = 0, transferDown = 0;
  double overlapped = 0, multispringWall = 0, stepWall = 0;
  long long solverIterations = 0;
  std::size_t bytesUp = 0, bytesDown = 0;
  std::size_t peakFastBytes = 0;
  int residentHigh = 0;
};

TelemetrySummary summarizeTelemetry(std::span<const StepTelemetry> steps);
/// One JSON object per line; blank lines are skipped. Malformed lines raise
/// InputError naming the line.
TelemetrySummary summarizeTelemetry(std::istream& in);
std::string formatSummary(const TelemetrySummary& s);

void writeSpectrumCsv(const ResponseSpectrum& s, const std::filesystem::path& path);
void writeProfileCsv(const MaxVelocityProfile& p, const std::filesystem::path& path);

}  // namespace tierfem
