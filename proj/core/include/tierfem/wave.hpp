#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tierfem {

/// Three-component bedrock input sampled at t = i*dt.
struct InputWave {
  double dt = 0.005;
  std::array<std::vector<double>, 3> samples;
  std::array<double, 3> bounds{0.6, 0.6, 0.3};

  std::size_t size() const { return samples[0].size(); }
  double at(int c, std::size_t i) const { return i < samples[c].size() ? samples[c][i] : 0.0; }
  void scale(double s);
  static InputWave zeros(std::size_t nt, double dt);
};

/// Uniform white noise per component, everything above fcut removed in the
/// frequency domain, then rescaled so max |x| equals the component bound.
/// Throws InputError if nt*dt cannot resolve fcut.
InputWave generateRandomWave(std::uint64_t seed, std::size_t nt, double dt, std::array<double, 3> bounds = {0.6, 0.6, 0.3},
                             double fcut = 2.5);

/// Zero-phase trapezoid filter: 0 below f1, cosine ramp to 1 at f2, 1 up to f3,
/// cosine ramp to 0 at f4.
std::vector<double> bandpass(std::span<const double> x, double dt, double f1, double f2, double f3, double f4);
double bandpassGain(double f, double f1, double f2, double f3, double f4);

/// |X(f)| per rfft bin and the bin frequencies.
std::vector<double> amplitudeSpectrum(std::span<const double> x);
double binFrequency(std::size_t k, std::size_t n, double dt);

/// Trapezoid integration from zero.
std::vector<double> integrate(std::span<const double> x, double dt);

/// CSV with a header-less or headed table of t plus one or three components.
/// Two-column files feed the x component.
InputWave readWaveCsv(const std::filesystem::path& path);
void writeWaveCsv(const InputWave& w, const std::filesystem::path& path);

}  // namespace tierfem
