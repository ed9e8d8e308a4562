#include "tierfem/postproc.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

#include "tierfem/errors.hpp"

namespace tierfem {

std::vector<double> logPeriods(double tmin, double tmax, std::size_t n) {
  if (!(tmin > 0 && tmax > tmin) || n < 2) throw InputError("period grid needs 0 < tmin < tmax and n >= 2");
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = tmin * std::pow(tmax / tmin, static_cast<double>(i) / (n - 1));
  return p;
}

ResponseSpectrum velocityResponseSpectrum(std::span<const double> accel, double dt, double h,
                                          std::vector<double> periods) {
  if (!(dt > 0)) throw InputError("spectrum needs dt > 0");
  if (!(h >= 0 && h < 1)) throw InputError("damping ratio must lie in [0, 1)");
  for (std::size_t i = 0; i < periods.size(); ++i)
    if (!(periods[i] > 0) || (i && periods[i] <= periods[i - 1]))
      throw InputError("periods must be positive and strictly increasing");
  ResponseSpectrum out;
  out.periods = std::move(periods);
  out.h = h;
  out.sv.assign(out.periods.size(), 0.0);
  for (std::size_t k = 0; k < out.periods.size(); ++k) {
    const double w = 2 * M_PI / out.periods[k];
    const int sub = std::max(1, static_cast<int>(std::ceil(dt * 100 / out.periods[k])));
    const double ds = dt / sub;
    // u'' + 2hw u' + w^2 u = -ag; average acceleration in effective-stiffness form.
    const double c = 2 * h * w, kk = w * w;
    const double keff = kk + 2 * c / ds + 4 / (ds * ds);
    double u = 0, v = 0, a = accel.empty() ? 0.0 : -accel[0], peak = 0;
    for (std::size_t i = 1; i < accel.size(); ++i) {
      for (int s = 1; s <= sub; ++s) {
        const double ag = accel[i - 1] + (accel[i] - accel[i - 1]) * s / sub;
        const double rhs = -ag + (4 / (ds * ds)) * u + (4 / ds) * v + a + c * ((2 / ds) * u + v);
        const double un = rhs / keff;
        const double vn = 2 / ds * (un - u) - v;
        const double an = 4 / (ds * ds) * (un - u) - 4 / ds * v - a;
        u = un;
        v = vn;
        a = an;
        peak = std::max(peak, std::abs(v));
      }
    }
    out.sv[k] = peak;
  }
  return out;
}

std::vector<double> differentiate(std::span<const double> x, double dt) {
  std::vector<double> d(x.size(), 0.0);
  if (x.size() < 2) return d;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) d[i] = (x[i + 1] - x[i - 1]) / (2 * dt);
  d.front() = (x[1] - x[0]) / dt;
  d.back() = (x[x.size() - 1] - x[x.size() - 2]) / dt;
  return d;
}

VelocityMeasure parseMeasure(const std::string& s) {
  if (s == "x") return VelocityMeasure::X;
  if (s == "y") return VelocityMeasure::Y;
  if (s == "z") return VelocityMeasure::Z;
  if (s == "norm") return VelocityMeasure::Norm;
  throw InputError("velocity measure must be x, y, z or norm");
}

std::vector<double> maxVelocityMap(const RunResult& r, VelocityMeasure m, int set) {
  if (set < 0 || static_cast<std::size_t>(set) >= r.surfaceField.size() || r.surfaceField[set].empty())
    throw InputError("run has no surface field history");
  const std::size_t ns = r.surfaceNodes.size();
  const auto& f = r.surfaceField[set];
  std::vector<double> out(ns, 0.0);
  for (std::size_t i = 0; i < r.nt; ++i)
    for (std::size_t j = 0; j < ns; ++j) {
      const double* v = &f[(i * ns + j) * 3];
      const double val = m == VelocityMeasure::Norm ? std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
                                                    : std::abs(v[static_cast<int>(m)]);
      out[j] = std::max(out[j], val);
    }
  return out;
}

MaxVelocityProfile lineProfile(const Mesh& mesh, std::span<const std::uint32_t> surfaceNodes,
                               std::span<const double> map, double ax, double ay, double bx, double by,
                               std::size_t samples) {
  if (surfaceNodes.size() != map.size() || surfaceNodes.empty()) throw InputError("map does not match the surface nodes");
  if (samples < 2) throw InputError("a profile needs at least two samples");
  MaxVelocityProfile p;
  const double len = std::hypot(bx - ax, by - ay);
  for (std::size_t s = 0; s < samples; ++s) {
    const double t = static_cast<double>(s) / (samples - 1);
    const double x = ax + t * (bx - ax), y = ay + t * (by - ay);
    std::size_t best = 0;
    double bd = INFINITY;
    for (std::size_t j = 0; j < surfaceNodes.size(); ++j) {
      const auto& q = mesh.nodes[surfaceNodes[j]];
      const double d = std::hypot(q[0] - x, q[1] - y);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    p.position.push_back(t * len);
    p.x.push_back(x);
    p.y.push_back(y);
    p.value.push_back(map[best]);
  }
  return p;
}

TelemetrySummary summarizeTelemetry(std::span<const StepTelemetry> steps) {
  TelemetrySummary s;
  for (const auto& t : steps) {
    if (s.strategy.empty()) s.strategy = t.strategy;
    ++s.steps;
    s.solver += t.solverSeconds;
    s.crsUpdate += t.crsUpdateSeconds;
    s.compute += t.computeSeconds;
    s.transfer += t.transferSeconds;
    s.transferUp += t.transferUpSeconds;
    s.transferDown += t.transferDownSeconds;
    s.overlapped += t.overlappedSeconds;
    s.multispringWall += t.multispringWallSeconds;
    s.stepWall += t.stepWallSeconds;
    for (int it : t.solverIterations) s.solverIterations += it;
    s.bytesUp += t.bytesUp;
    s.bytesDown += t.bytesDown;
    s.peakFastBytes = std::max(s.peakFastBytes, t.peakFastBytes);
    s.residentHigh = std::max(s.residentHigh, t.residentHigh);
  }
  return s;
}

TelemetrySummary summarizeTelemetry(std::istream& in) {
  std::vector<StepTelemetry> steps;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      steps.push_back(nlohmann::json::parse(line).get<StepTelemetry>());
    } catch (const nlohmann::json::exception& e) {
      throw InputError("telemetry line " + std::to_string(lineNo) + ": " + e.what());
    }
  }
  if (steps.empty()) throw InputError("telemetry stream has no step records");
  return summarizeTelemetry(steps);
}

std::string formatSummary(const TelemetrySummary& s) {
  std::ostringstream o;
  char buf[160];
  const double n = s.steps ? static_cast<double>(s.steps) : 1.0;
  o << "strategy " << s.strategy << ", " << s.steps << " steps\n";
  std::snprintf(buf, sizeof buf, "%-22s %14s %14s\n", "stage", "total (s)", "per step (s)");
  o << buf;
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof buf, "%-22s %14.6f %14.6f\n", name, v, v / n);
    o << buf;
  };
  row("elapsed", s.stepWall);
  row("solver", s.solver);
  row("CRS update", s.crsUpdate);
  row("multispring wall", s.multispringWall);
  row("  compute", s.compute);
  row("  transfer", s.transfer);
  row("  overlapped", s.overlapped);
  std::snprintf(buf, sizeof buf, "%-22s %14lld %14.1f\n", "CG iterations", s.solverIterations, s.solverIterations / n);
  o << buf;
  std::snprintf(buf, sizeof buf, "%-22s %14zu\n%-22s %14zu\n", "bytes up", s.bytesUp, "bytes down", s.bytesDown);
  o << buf;
  std::snprintf(buf, sizeof buf, "%-22s %14zu\n%-22s %14d\n", "fast tier peak (B)", s.peakFastBytes,
                "resident partitions", s.residentHigh);
  o << buf;
  return o.str();
}

void writeSpectrumCsv(const ResponseSpectrum& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(12);
  out << "period,sv\n";
  for (std::size_t i = 0; i < s.periods.size(); ++i) out << s.periods[i] << ',' << s.sv[i] << '\n';
}

void writeProfileCsv(const MaxVelocityProfile& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(12);
  out << "s,x,y,value\n";
  for (std::size_t i = 0; i < p.position.size(); ++i)
    out << p.position[i] << ',' << p.x[i] << ',' << p.y[i] << ',' << p.value[i] << '\n';
}

}  // namespace tierfem
