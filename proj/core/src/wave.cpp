#include "tierfem/wave.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>

#include "tierfem/errors.hpp"

namespace tierfem {

namespace {

// FFTW planning is not thread safe.
std::mutex& planMutex() {
  static std::mutex m;
  return m;
}

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> out(x.size() / 2 + 1);
  fftw_plan p;
  {
    std::lock_guard lk(planMutex());
    p = fftw_plan_dft_r2c_1d(n, in.data(), reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  }
  fftw_execute(p);
  {
    std::lock_guard lk(planMutex());
    fftw_destroy_plan(p);
  }
  return out;
}

std::vector<double> irfft(std::vector<std::complex<double>> X, std::size_t n) {
  std::vector<double> out(n);
  fftw_plan p;
  {
    std::lock_guard lk(planMutex());
    p = fftw_plan_dft_c2r_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(X.data()), out.data(),
                             FFTW_ESTIMATE);
  }
  fftw_execute(p);
  {
    std::lock_guard lk(planMutex());
    fftw_destroy_plan(p);
  }
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

}  // namespace

void InputWave::scale(double s) {
  for (auto& c : samples)
    for (double& v : c) v *= s;
  for (double& b : bounds) b *= std::abs(s);
}

InputWave InputWave::zeros(std::size_t nt, double dt) {
  InputWave w;
  w.dt = dt;
  for (auto& c : w.samples) c.assign(nt, 0.0);
  w.bounds = {0, 0, 0};
  return w;
}

double binFrequency(std::size_t k, std::size_t n, double dt) { return static_cast<double>(k) / (n * dt); }

InputWave generateRandomWave(std::uint64_t seed, std::size_t nt, double dt, std::array<double, 3> bounds,
                             double fcut) {
  if (nt == 0 || !(dt > 0)) throw InputError("random wave needs nt > 0 and dt > 0");
  if (nt * dt < 2.0 / fcut) throw InputError("record too short to resolve the cutoff frequency");
  InputWave w;
  w.dt = dt;
  w.bounds = bounds;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(nt);
    for (double& v : x) v = u(rng);
    auto X = rfft(x);
    for (std::size_t k = 0; k < X.size(); ++k)
      if (binFrequency(k, nt, dt) > fcut) X[k] = 0.0;
    X[0] = 0.0;  // no static offset
    x = irfft(std::move(X), nt);
    double peak = 0;
    for (double v : x) peak = std::max(peak, std::abs(v));
    const double s = peak > 0 ? bounds[c] / peak : 0.0;
    for (double& v : x) v *= s;
    w.samples[c] = std::move(x);
  }
  return w;
}

double bandpassGain(double f, double f1, double f2, double f3, double f4) {
  f = std::abs(f);
  if (f <= f1 || f >= f4) return 0.0;
  if (f < f2) return 0.5 * (1.0 - std::cos(M_PI * (f - f1) / (f2 - f1)));
  if (f <= f3) return 1.0;
  return 0.5 * (1.0 + std::cos(M_PI * (f - f3) / (f4 - f3)));
}

std::vector<double> bandpass(std::span<const double> x, double dt, double f1, double f2, double f3, double f4) {
  if (!(0 <= f1 && f1 < f2 && f2 < f3 && f3 < f4)) throw InputError("bandpass corners must satisfy f1 < f2 < f3 < f4");
  if (f4 > 0.5 / dt) throw InputError("bandpass corner above the Nyquist frequency");
  if (x.empty()) return {};
  auto X = rfft(x);
  for (std::size_t k = 0; k < X.size(); ++k) X[k] *= bandpassGain(binFrequency(k, x.size(), dt), f1, f2, f3, f4);
  return irfft(std::move(X), x.size());
}

std::vector<double> amplitudeSpectrum(std::span<const double> x) {
  const auto X = rfft(x);
  std::vector<double> a(X.size());
  for (std::size_t k = 0; k < X.size(); ++k) a[k] = std::abs(X[k]);
  return a;
}

std::vector<double> integrate(std::span<const double> x, double dt) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t i = 1; i < x.size(); ++i) y[i] = y[i - 1] + 0.5 * dt * (x[i - 1] + x[i]);
  return y;
}

InputWave readWaveCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open wave file " + path.string());
  InputWave w;
  std::vector<double> t;
  std::string line;
  int lineNo = 0;
  std::size_t cols = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<double> v;
    double d;
    while (ss >> d) v.push_back(d);
    if (v.empty()) {
      if (t.empty()) continue;  // header
      throw InputError(path.string() + ":" + std::to_string(lineNo) + ": not a number row");
    }
    if (!ss.eof()) {
      if (t.empty() && v.empty()) continue;
      throw InputError(path.string() + ":" + std::to_string(lineNo) + ": not a number row");
    }
    if (cols == 0) cols = v.size();
    if (v.size() != cols || (cols != 2 && cols != 4))
      throw InputError(path.string() + ":" + std::to_string(lineNo) + ": expected 2 or 4 columns");
    t.push_back(v[0]);
    for (int c = 0; c < 3; ++c) w.samples[c].push_back(cols == 4 ? v[1 + c] : (c == 0 ? v[1] : 0.0));
  }
  if (t.size() < 2) throw InputError("wave file " + path.string() + " has fewer than two samples");
  w.dt = t[1] - t[0];
  for (std::size_t i = 1; i < t.size(); ++i)
    if (std::abs(t[i] - t[i - 1] - w.dt) > 1e-6 * w.dt) throw InputError("wave file samples are not evenly spaced");
  for (int c = 0; c < 3; ++c) {
    double m = 0;
    for (double v : w.samples[c]) m = std::max(m, std::abs(v));
    w.bounds[c] = m;
  }
  return w;
}

void writeWaveCsv(const InputWave& w, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(17);
  out << "t,x,y,z\n";
  for (std::size_t i = 0; i < w.size(); ++i)
    out << i * w.dt << ',' << w.samples[0][i] << ',' << w.samples[1][i] << ',' << w.samples[2][i] << '\n';
}

}  // namespace tierfem
