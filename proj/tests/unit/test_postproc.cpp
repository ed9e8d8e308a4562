#include <cmath>
#include <sstream>

#include "doctest.h"
#include "tierfem/errors.hpp"
#include "tierfem/postproc.hpp"

using namespace tierfem;

TEST_CASE("period grid") {
  const auto p = logPeriods();
  CHECK(p.size() == 100);
  CHECK(p.front() == doctest::Approx(0.1));
  CHECK(p.back() == doctest::Approx(10.0));
  for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] > p[i - 1]);
  CHECK_THROWS_AS(logPeriods(1.0, 0.5, 10), InputError);
}

TEST_CASE("zero input gives a zero spectrum") {
  std::vector<double> a(500, 0.0);
  const auto s = velocityResponseSpectrum(a, 0.01);
  CHECK(s.h == 0.05);
  for (double v : s.sv) CHECK(v == 0.0);
}

TEST_CASE("resonant sine reaches A / (2 h w)") {
  const double dt = 0.005, A = 1.5, h = 0.05, w = 2 * M_PI;
  std::vector<double> a(static_cast<std::size_t>(60.0 / dt));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = A * std::sin(w * i * dt);
  const auto s = velocityResponseSpectrum(a, dt, h, {0.5, 1.0, 2.0});
  CHECK(s.sv[1] == doctest::Approx(A / (2 * h * w)).epsilon(0.05));
  CHECK(s.sv[0] < s.sv[1]);
  CHECK(s.sv[2] < s.sv[1]);
}

TEST_CASE("spectrum converges under dt refinement") {
  // Smooth band-limited input sampled at dt and dt/2.
  auto input = [](double t) { return std::sin(2.1 * t) + 0.5 * std::sin(7.3 * t + 0.4) + 0.2 * std::cos(13.0 * t); };
  const double dt = 0.01;
  std::vector<double> a1, a2;
  for (std::size_t i = 0; i < 2000; ++i) a1.push_back(input(i * dt));
  for (std::size_t i = 0; i < 4000; ++i) a2.push_back(input(i * dt / 2));
  const auto periods = logPeriods(10 * dt, 10.0, 40);
  const auto s1 = velocityResponseSpectrum(a1, dt, 0.05, periods);
  const auto s2 = velocityResponseSpectrum(a2, dt / 2, 0.05, periods);
  for (std::size_t k = 0; k < periods.size(); ++k) CHECK(std::abs(s1.sv[k] - s2.sv[k]) <= 0.01 * s2.sv[k]);
}

TEST_CASE("spectrum input validation") {
  std::vector<double> a(10, 1.0);
  CHECK_THROWS_AS(velocityResponseSpectrum(a, 0.0), InputError);
  CHECK_THROWS_AS(velocityResponseSpectrum(a, 0.01, 1.0), InputError);
  CHECK_THROWS_AS(velocityResponseSpectrum(a, 0.01, 0.05, {1.0, 0.5}), InputError);
}

TEST_CASE("differentiate") {
  std::vector<double> x;
  for (int i = 0; i < 10; ++i) x.push_back(3.0 * i * 0.1);
  for (double d : differentiate(x, 0.1)) CHECK(d == doctest::Approx(3.0));
}

TEST_CASE("maximum velocity maps") {
  RunResult r;
  r.nt = 4;
  r.surfaceNodes = {0, 1, 2};
  CHECK_THROWS_AS(maxVelocityMap(r, VelocityMeasure::Norm), InputError);
  r.surfaceField.assign(1, std::vector<double>(4 * 3 * 3, 0.0));
  for (double v : maxVelocityMap(r, VelocityMeasure::Norm)) CHECK(v == 0.0);
  // Impulse at node 1, record 2.
  r.surfaceField[0][(2 * 3 + 1) * 3 + 0] = -3.0;
  r.surfaceField[0][(2 * 3 + 1) * 3 + 1] = 4.0;
  const auto n = maxVelocityMap(r, VelocityMeasure::Norm);
  CHECK(n == std::vector<double>{0.0, 5.0, 0.0});
  CHECK(maxVelocityMap(r, VelocityMeasure::X)[1] == 3.0);
  CHECK(maxVelocityMap(r, VelocityMeasure::Z)[1] == 0.0);
  CHECK(parseMeasure("norm") == VelocityMeasure::Norm);
  CHECK_THROWS_AS(parseMeasure("w"), InputError);
}

TEST_CASE("line profile picks nearest surface nodes") {
  Mesh m;
  m.nodes = {{0, 0, 0}, {10, 0, 0}, {20, 0, 0}};
  const std::vector<std::uint32_t> s = {0, 1, 2};
  const std::vector<double> map = {1.0, 2.0, 3.0};
  const auto p = lineProfile(m, s, map, 0, 0, 20, 0, 3);
  CHECK(p.value == map);
  CHECK(p.position.back() == doctest::Approx(20.0));
  CHECK_THROWS_AS(lineProfile(m, s, std::vector<double>{1.0}, 0, 0, 1, 1), InputError);
}

TEST_CASE("telemetry summary is an exact sum") {
  StepTelemetry a, b;
  a.strategy = b.strategy = "PIPELINED";
  a.solverSeconds = 0.5;
  b.solverSeconds = 0.25;
  a.overlappedSeconds = 0.1;
  b.overlappedSeconds = 0.2;
  a.residentHigh = 2;
  b.residentHigh = 1;
  a.solverIterations = {10};
  b.solverIterations = {12};
  a.peakFastBytes = 100;
  b.peakFastBytes = 90;
  std::stringstream ss;
  ss << nlohmann::json(a).dump() << "\n\n" << nlohmann::json(b).dump() << "\n";
  const auto s = summarizeTelemetry(ss);
  CHECK(s.steps == 2);
  CHECK(s.solver == 0.5 + 0.25);
  CHECK(s.overlapped == 0.1 + 0.2);
  CHECK(s.solverIterations == 22);
  CHECK(s.residentHigh == 2);
  CHECK(s.peakFastBytes == 100);
  CHECK(formatSummary(s).find("overlapped") != std::string::npos);

  std::stringstream one;
  one << nlohmann::json(a).dump() << "\n";
  const auto s1 = summarizeTelemetry(one);
  CHECK(s1.solver == a.solverSeconds);
  CHECK(s1.transfer == 0.0);
}

TEST_CASE("malformed telemetry names the line") {
  std::stringstream ss;
  StepTelemetry a;
  ss << nlohmann::json(a).dump() << "\n{\"step\": 1}\n";
  try {
    summarizeTelemetry(ss);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::stringstream empty;
  CHECK_THROWS_AS(summarizeTelemetry(empty), InputError);
}
