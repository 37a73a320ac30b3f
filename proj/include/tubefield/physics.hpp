#ifndef TUBEFIELD_PHYSICS_HPP
#define TUBEFIELD_PHYSICS_HPP

#include <cmath>
#include <functional>
#include <utility>

#include "tubefield/common.hpp"

namespace tubefield {

/// Gas constants for the lossy horn equation. All SI.
///
/// K is stored redundantly and must equal rho*c^2; the factory derives it
/// and validate() rejects anything inconsistent.
struct AirProperties {
  double rho;        // density, kg/m^3
  double c;          // sound speed, m/s
  double K;          // bulk modulus, Pa
  double mu;         // dynamic viscosity, Pa s
  double eta;        // heat-capacity ratio
  double lambda_th;  // thermal conductivity, W/(m K)
  double cp;         // specific heat at constant pressure, J/(kg K)
  double omega_c;    // angular velocity of the energy-loss terms, rad/s

  static AirProperties make(double rho, double c, double mu, double eta,
                            double lambda_th, double cp, double omega_c);

  /// 20 degC air with the loss terms evaluated at angular frequency omega_c.
  static AirProperties standard(double omega_c);

  void validate() const;
};

/// Axisymmetric tube profile r(x) on [0, L] with the derived cross-section
/// A(x) = pi r^2, circumference S(x) = 2 pi r and A_x(x) = 2 pi r r_x.
///
/// A and S are always computed from r, never stored. For sampled profiles
/// r_x uses central differences at interior nodes and the 3-point one-sided
/// stencil (-3 r0 + 4 r1 - r2)/(2h) at the ends, both second order.
class TubeGeometry {
 public:
  static TubeGeometry cylinder(double radius, double length);
  static TubeGeometry cone(double r0, double r1, double length);
  static TubeGeometry from_profile(std::function<double(double)> r,
                                   std::function<double(double)> r_x,
                                   double length);
  static TubeGeometry from_samples(const Vec& radii, double length);

  double length() const { return length_; }
  double radius(double x) const { return r_(x); }
  double radius_x(double x) const { return rx_(x); }

  double area(double x) const {
    const double r = r_(x);
    return kPi * r * r;
  }
  double circumference(double x) const { return 2.0 * kPi * r_(x); }
  double area_x(double x) const { return 2.0 * kPi * r_(x) * rx_(x); }
  /// A_x/A = 2 r_x / r, the convection coefficient of the horn equation.
  double area_x_over_area(double x) const { return 2.0 * rx_(x) / r_(x); }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  TubeGeometry(std::function<double(double)> r, std::function<double(double)> rx,
               double length);

  std::function<double(double)> r_;
  std::function<double(double)> rx_;
  double length_;
};

/// Time-domain radiation coefficients. The Taylor pair (delta, beta_c) of the
/// frequency-domain impedance maps onto the Pade pair (alpha, beta) through
/// alpha = 1/delta, beta = beta_c/delta^2; both forms are kept.
struct RadiationCoefficients {
  double delta;
  double beta_c;
  double alpha;
  double beta;

  void validate() const;
};

/// alpha = 1/delta, beta = beta_c/delta^2. Throws std::domain_error for
/// delta <= 0.
RadiationCoefficients radiation_from_taylor(double delta, double beta_c);

/// Rosenberg-B glottal pulse parameters. smooth_width is the standard
/// deviation (seconds) of the Gaussian the pulse is convolved with.
struct SourceWaveform {
  double U0;            // peak volume velocity, m^3/s
  double T;             // period, s
  double tp_frac;       // opening fraction of T
  double tn_frac;       // closing fraction of T
  double smooth_width;  // Gaussian kernel std dev, s

  void validate() const;
};

/// Raw (unsmoothed) Rosenberg-B pulse, T-periodic:
/// rise U0/2 (1 - cos(pi tau/Tp)) on [0,Tp], fall U0 cos(pi (tau-Tp)/(2Tn))
/// on (Tp, Tp+Tn], zero over the closed phase.
double rosenberg_flow_raw(double t, const SourceWaveform& src);

/// Rosenberg pulse convolved with a normalized periodic Gaussian.
///
/// The convolution is precomputed on a dense one-period table (discrete
/// kernel normalized to unit sum, so the pulse mean is preserved exactly at
/// table resolution) and evaluated by periodic Catmull-Rom interpolation,
/// which keeps the waveform C^1 and exactly T-periodic.
class SmoothedRosenberg {
 public:
  explicit SmoothedRosenberg(const SourceWaveform& src, int table_size = 8192);

  double operator()(double t) const;
  const SourceWaveform& waveform() const { return src_; }

 private:
  SourceWaveform src_;
  Vec table_;
};

/// Convenience wrapper over SmoothedRosenberg for one-off evaluation; hot
/// loops should hold the evaluator instead (the table is rebuilt per call).
double rosenberg_flow(double t, const SourceWaveform& src);

/// Visco-thermal loss coefficients of the horn equation at position x:
///   R = (S/A^2) sqrt(omega_c rho mu / 2)
///   G = S (eta - 1)/(rho c^2) sqrt(lambda omega_c / (2 cp rho))
std::pair<double, double> loss_coefficients(const AirProperties& air,
                                            const TubeGeometry& geom, double x);

/// p = R A phi + rho phi_t. Works on any scalar-like type (doubles, jets).
template <class S>
inline S pressure_from_potential(const S& phi, const S& phi_t, double R,
                                 double A, double rho) {
  return (R * A) * phi + rho * phi_t;
}

/// u = -A phi_x.
template <class S>
inline S volume_velocity_from_potential(const S& phi_x, double A) {
  return (-A) * phi_x;
}

}  // namespace tubefield

#endif
