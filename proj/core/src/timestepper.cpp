#include "tierfem/timestepper.hpp"

#include <algorithm>
#include <cmath>

#include "tierfem/errors.hpp"

namespace tierfem {

void buildRhs(std::span<const double> mass, std::span<const double> dashpot, const LinearOp& stiffness,
              const NewmarkCoeffs& nm, const RayleighCoeffs& r, const TimeState& st, std::span<const double> fExt,
              std::span<double> rhs) {
  const std::size_t n = st.size();
  if (rhs.size() != n || fExt.size() != n || mass.size() != n || dashpot.size() != n)
    throw InputError("buildRhs: vector length mismatch");
  if (r.beta != 0.0) {
    stiffness(st.v, rhs);
    for (std::size_t i = 0; i < n; ++i) rhs[i] *= r.beta;
  } else {
    std::fill(rhs.begin(), rhs.end(), 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double cv = r.alpha * mass[i] * st.v[i] + dashpot[i] * st.v[i];
    rhs[i] += fExt[i] - st.q[i] + cv + mass[i] * (st.a[i] + nm.c4dt * st.v[i]);
  }
}

void applyUpdates(TimeState& st, std::span<const double> du, std::span<const double> dq, const NewmarkCoeffs& nm) {
  const std::size_t n = st.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double vOld = st.v[i];
    st.u[i] += du[i];
    st.v[i] = -vOld + nm.c2dt * du[i];
    st.a[i] = -st.a[i] - nm.c4dt * vOld + nm.c4dt2 * du[i];
    st.q[i] += dq[i];
  }
  ++st.step;
}

RayleighCoeffs updateRayleigh(double hbar, double fmin, double fmax) {
  if (!(fmin > 0 && fmax > fmin)) throw InputError("Rayleigh band needs 0 < fmin < fmax");
  if (hbar < 0) throw InputError("damping ratio must be non-negative");
  if (hbar == 0) return {};
  const double w1 = 2 * M_PI * fmin, w2 = 2 * M_PI * fmax;
  // Basis 1/(2w) and w/2 integrated over [w1, w2].
  const double a11 = 0.25 * (1 / w1 - 1 / w2);
  const double a12 = 0.25 * (w2 - w1);
  const double a22 = (w2 * w2 * w2 - w1 * w1 * w1) / 12.0;
  const double b1 = hbar * 0.5 * std::log(w2 / w1);
  const double b2 = hbar * 0.25 * (w2 * w2 - w1 * w1);
  const double det = a11 * a22 - a12 * a12;
  RayleighCoeffs r{(b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det};
  // A negative coefficient means the one-term fit is better; refit with the other alone.
  if (r.alpha < 0) r = {0.0, b2 / a22};
  if (r.beta < 0) r = {b1 / a11, 0.0};
  return r;
}

void initialAcceleration(std::span<const double> mass, std::span<const double> dashpot, TimeState& st,
                         std::span<const double> fExt) {
  for (std::size_t i = 0; i < st.size(); ++i) st.a[i] = (fExt[i] - dashpot[i] * st.v[i] - st.q[i]) / mass[i];
}

}  // namespace tierfem
