#include "tubefield/physics.hpp"

#include <cmath>
#include <stdexcept>

namespace tubefield {

namespace {
constexpr double kPi = 3.14159265358979323846;

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(name) + " must be strictly positive");
  }
}
}  // namespace

AirProperties AirProperties::make(double rho, double c, double mu, double eta,
                                  double lambda_th, double cp, double omega_c) {
  AirProperties air{rho, c, rho * c * c, mu, eta, lambda_th, cp, omega_c};
  air.validate();
  return air;
}

AirProperties AirProperties::standard(double omega_c) {
  return make(1.2, 343.0, 1.81e-5, 1.402, 0.0262, 1005.0, omega_c);
}

void AirProperties::validate() const {
  require_positive(rho, "rho");
  require_positive(c, "c");
  require_positive(K, "K");
  require_positive(mu, "mu");
  require_positive(eta, "eta");
  require_positive(lambda_th, "lambda_th");
  require_positive(cp, "cp");
  require_positive(omega_c, "omega_c");
  const double k_ref = rho * c * c;
  if (std::abs(K - k_ref) > 1e-12 * k_ref) {
    throw std::invalid_argument("AirProperties: K must equal rho*c^2");
  }
}

TubeGeometry::TubeGeometry(std::function<double(double)> r,
                           std::function<double(double)> rx, double length)
    : r_(std::move(r)), rx_(std::move(rx)), length_(length) {
  require_positive(length_, "length");
  // Positivity of the profile checked on a dense sample; parametric factories
  // pass exact profiles, so this is a guard against bad user callables.
  const int n_check = 1001;
  for (int i = 0; i < n_check; ++i) {
    const double x = length_ * static_cast<double>(i) / (n_check - 1);
    if (!(r_(x) > 0.0)) {
      throw std::invalid_argument("TubeGeometry: r(x) must be > 0 on [0, L]");
    }
  }
}

TubeGeometry TubeGeometry::cylinder(double radius, double length) {
  require_positive(radius, "radius");
  return TubeGeometry([radius](double) { return radius; },
                      [](double) { return 0.0; }, length);
}

TubeGeometry TubeGeometry::cone(double r0, double r1, double length) {
  require_positive(r0, "r0");
  require_positive(r1, "r1");
  const double slope = (r1 - r0) / length;
  return TubeGeometry([r0, slope](double x) { return r0 + slope * x; },
                      [slope](double) { return slope; }, length);
}

TubeGeometry TubeGeometry::from_profile(std::function<double(double)> r,
                                        std::function<double(double)> r_x,
                                        double length) {
  return TubeGeometry(std::move(r), std::move(r_x), length);
}

TubeGeometry TubeGeometry::from_samples(const Vec& radii, double length) {
  const Eigen::Index n = radii.size();
  if (n < 3) throw std::invalid_argument("from_samples: need at least 3 radii");
  const double h = length / static_cast<double>(n - 1);
  Vec rx(n);
  rx[0] = (-3.0 * radii[0] + 4.0 * radii[1] - radii[2]) / (2.0 * h);
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    rx[i] = (radii[i + 1] - radii[i - 1]) / (2.0 * h);
  }
  rx[n - 1] = (3.0 * radii[n - 1] - 4.0 * radii[n - 2] + radii[n - 3]) / (2.0 * h);

  auto interp = [length, n](const Vec& table, double x) {
    const double s = std::clamp(x / length, 0.0, 1.0) * static_cast<double>(n - 1);
    const auto i = static_cast<Eigen::Index>(std::min<double>(s, static_cast<double>(n - 2)));
    const double f = s - static_cast<double>(i);
    return table[i] * (1.0 - f) + table[i + 1] * f;
  };
  return TubeGeometry(
      [radii, interp](double x) { return interp(radii, x); },
      [rx, interp](double x) { return interp(rx, x); }, length);
}

void RadiationCoefficients::validate() const {
  if (!(delta > 0.0)) throw std::domain_error("RadiationCoefficients: delta must be > 0");
  const double a_ref = 1.0 / delta;
  const double b_ref = beta_c / (delta * delta);
  if (std::abs(alpha - a_ref) > 1e-12 * std::abs(a_ref) ||
      std::abs(beta - b_ref) > 1e-12 * std::max(std::abs(b_ref), 1e-300)) {
    throw std::invalid_argument("RadiationCoefficients: Pade pair inconsistent with Taylor pair");
  }
}

RadiationCoefficients radiation_from_taylor(double delta, double beta_c) {
  if (!(delta > 0.0)) throw std::domain_error("radiation_from_taylor: delta must be > 0");
  return RadiationCoefficients{delta, beta_c, 1.0 / delta, beta_c / (delta * delta)};
}

void SourceWaveform::validate() const {
  if (!(U0 >= 0.0) || !std::isfinite(U0))
    throw std::invalid_argument("SourceWaveform: U0 must be finite and >= 0");
  require_positive(T, "T");
  if (!(tp_frac > 0.0) || !(tn_frac > 0.0) || tp_frac + tn_frac > 1.0) {
    throw std::invalid_argument("SourceWaveform: need 0 < tp_frac, tn_frac and tp_frac + tn_frac <= 1");
  }
  if (smooth_width < 0.0) throw std::invalid_argument("SourceWaveform: smooth_width must be >= 0");
}

double rosenberg_flow_raw(double t, const SourceWaveform& src) {
  const double tau = t - src.T * std::floor(t / src.T);
  const double Tp = src.tp_frac * src.T;
  const double Tn = src.tn_frac * src.T;
  if (tau <= Tp) {
    return 0.5 * src.U0 * (1.0 - std::cos(kPi * tau / Tp));
  }
  if (tau <= Tp + Tn) {
    return src.U0 * std::cos(kPi * (tau - Tp) / (2.0 * Tn));
  }
  return 0.0;
}

SmoothedRosenberg::SmoothedRosenberg(const SourceWaveform& src, int table_size)
    : src_(src) {
  src_.validate();
  const int n = table_size;
  const double h = src_.T / n;
  Vec raw(n);
  for (int i = 0; i < n; ++i) raw[i] = rosenberg_flow_raw(i * h, src_);

  if (src_.smooth_width <= 0.0) {
    table_ = raw;
    return;
  }
  const double sigma = src_.smooth_width;
  const int half = std::min(n / 2, static_cast<int>(std::ceil(8.0 * sigma / h)));
  Vec kernel(2 * half + 1);
  for (int j = -half; j <= half; ++j) {
    const double s = j * h;
    kernel[j + half] = std::exp(-0.5 * s * s / (sigma * sigma));
  }
  kernel /= kernel.sum();  // unit mass => pulse mean preserved exactly

  table_.resize(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = -half; j <= half; ++j) {
      int k = (i - j) % n;
      if (k < 0) k += n;
      acc += kernel[j + half] * raw[k];
    }
    table_[i] = acc;
  }
}

double SmoothedRosenberg::operator()(double t) const {
  const auto n = static_cast<int>(table_.size());
  double s = (t / src_.T) * n;
  s -= n * std::floor(s / n);
  auto i1 = static_cast<int>(s);
  if (i1 >= n) i1 = 0;
  const double f = s - i1;
  const int i0 = (i1 + n - 1) % n;
  const int i2 = (i1 + 1) % n;
  const int i3 = (i1 + 2) % n;
  const double p0 = table_[i0], p1 = table_[i1], p2 = table_[i2], p3 = table_[i3];
  // Catmull-Rom; C^1 across table nodes.
  return p1 + 0.5 * f * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 +
                                        f * (3.0 * (p1 - p2) + p3 - p0)));
}

double rosenberg_flow(double t, const SourceWaveform& src) {
  return SmoothedRosenberg(src)(t);
}

std::pair<double, double> loss_coefficients(const AirProperties& air,
                                            const TubeGeometry& geom, double x) {
  if (x < 0.0 || x > geom.length()) {
    throw std::invalid_argument("loss_coefficients: x outside [0, L]");
  }
  const double A = geom.area(x);
  const double S = geom.circumference(x);
  const double R = S / (A * A) * std::sqrt(air.omega_c * air.rho * air.mu / 2.0);
  const double G = S * (air.eta - 1.0) / (air.rho * air.c * air.c) *
                   std::sqrt(air.lambda_th * air.omega_c / (2.0 * air.cp * air.rho));
  return {R, G};
}

}  // namespace tubefield
