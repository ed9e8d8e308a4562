#pragma once

#include <span>
#include <vector>

#include "coeffs.hpp"
#include "sparse.hpp"

namespace tierfem {

struct TimeState {
  std::vector<double> u, v, a, q;
  int step = 0;

  explicit TimeState(std::size_t nDofs = 0) : u(nDofs, 0.0), v(nDofs, 0.0), a(nDofs, 0.0), q(nDofs, 0.0) {}
  std::size_t size() const { return u.size(); }
};

/// rhs = f - q + C v + M (a + 4/dt v) with C v = alpha M v + beta K v + C_b v.
/// K v is only evaluated when beta != 0.
void buildRhs(std::span<const double> mass, std::span<const double> dashpot, const LinearOp& stiffness,
              const NewmarkCoeffs& nm, const RayleighCoeffs& r, const TimeState& st, std::span<const double> fExt,
              std::span<double> rhs);

/// u += du; v = -v + 2/dt du; a = -a - 4/dt v_old + 4/dt^2 du; q += dq.
void applyUpdates(TimeState& st, std::span<const double> du, std::span<const double> dq, const NewmarkCoeffs& nm);

/// Least-squares fit of 0.5 (alpha/w + beta w) to hbar over [fmin, fmax] Hz.
RayleighCoeffs updateRayleigh(double hbar, double fmin, double fmax);

/// Lumped-mass equilibrium at t = 0: a = (f - C_b v - q) / m.
void initialAcceleration(std::span<const double> mass, std::span<const double> dashpot, TimeState& st,
                         std::span<const double> fExt);

}  // namespace tierfem
