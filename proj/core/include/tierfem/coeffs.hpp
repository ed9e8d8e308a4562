#pragma once

namespace tierfem {

/// Average-acceleration Newmark constants for a fixed dt.
struct NewmarkCoeffs {
  double dt = 0.005;
  double c4dt2 = 4.0 / (0.005 * 0.005);  // 4/dt^2
  double c2dt = 2.0 / 0.005;             // 2/dt
  double c4dt = 4.0 / 0.005;             // 4/dt

  static NewmarkCoeffs make(double dt);
};

/// C = alpha*M + beta*K.
struct RayleighCoeffs {
  double alpha = 0.0;
  double beta = 0.0;
};

/// A = mass*M + stiff*K + dash*C_b for the incremental Newmark system.
struct OperatorScales {
  double mass = 0.0;
  double stiff = 1.0;
  double dash = 0.0;

  static OperatorScales make(const NewmarkCoeffs& nm, const RayleighCoeffs& r);
};

}  // namespace tierfem
