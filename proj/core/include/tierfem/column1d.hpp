#pragma once

#include <array>
#include <optional>
#include <vector>

#include "constitutive.hpp"
#include "mesh.hpp"
#include "wave.hpp"

namespace tierfem {

struct ColumnOptions {
  double fmin = 0.2, fmax = 2.5;  // Rayleigh fit band
  /// Material behind the base dashpot; defaults to the bottom cell's material.
  std::optional<int> baseMaterial;
};

/// Vertically propagating waves through the column's cell stack. Levels are the
/// quadratic grid points numbered from the bottom (0) to the surface (2*nz).
/// Records hold the state at t = i*dt for i = 0..nt-1.
struct ColumnResult {
  double dt = 0;
  std::size_t nt = 0, levels = 0;
  std::vector<double> velocity;  // [nt][levels][3]
  std::vector<double> stress;    // [nt][levels][6], Voigt
  std::vector<double> hbar;      // per record

  Vec3 velocityAt(std::size_t i, std::size_t level) const;
  Voigt6 stressAt(std::size_t i, std::size_t level) const;
  /// One component of velocity over time at the top level.
  std::vector<double> surfaceVelocity(int component) const;
};

/// Bedrock incident velocity enters through the base dashpot as 2*c*v_inc, so a
/// surface response of 2*v_inc means no amplification. Springs are the same
/// multi-spring points as in 3D, two per cell.
ColumnResult run1dColumn(const Column1D& col, const MaterialTable& materials, const InputWave& wave,
                         std::size_t nt, const ColumnOptions& opt = {});

}  // namespace tierfem
