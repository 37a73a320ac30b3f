#ifndef TUBEFIELD_JET_HPP
#define TUBEFIELD_JET_HPP

#include <cmath>

namespace tubefield {

/// Second-order forward-mode jet along a single direction: carries the value
/// together with the first and second directional derivatives. Composition
/// follows the chain rule,
///   h(f): d1 = h'(f.v) f.d1,  d2 = h''(f.v) f.d1^2 + h'(f.v) f.d2,
/// so a function evaluated on variable(x) yields exact f, f', f''.
template <class T = double>
struct Jet2 {
  T v{};
  T d1{};
  T d2{};

  constexpr Jet2() = default;
  constexpr Jet2(T value) : v(value) {}
  constexpr Jet2(T value, T first, T second) : v(value), d1(first), d2(second) {}

  static constexpr Jet2 variable(T value, T direction = T(1)) {
    return Jet2(value, direction, T(0));
  }

  Jet2& operator+=(const Jet2& o) {
    v += o.v;
    d1 += o.d1;
    d2 += o.d2;
    return *this;
  }
  Jet2& operator-=(const Jet2& o) {
    v -= o.v;
    d1 -= o.d1;
    d2 -= o.d2;
    return *this;
  }
  Jet2& operator*=(T s) {
    v *= s;
    d1 *= s;
    d2 *= s;
    return *this;
  }
};

template <class T>
inline Jet2<T> operator+(Jet2<T> a, const Jet2<T>& b) { return a += b; }
template <class T>
inline Jet2<T> operator-(Jet2<T> a, const Jet2<T>& b) { return a -= b; }
template <class T>
inline Jet2<T> operator-(const Jet2<T>& a) { return {-a.v, -a.d1, -a.d2}; }

template <class T>
inline Jet2<T> operator*(const Jet2<T>& a, const Jet2<T>& b) {
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1,
          a.d2 * b.v + T(2) * a.d1 * b.d1 + a.v * b.d2};
}
template <class T>
inline Jet2<T> operator*(Jet2<T> a, T s) { return a *= s; }
template <class T>
inline Jet2<T> operator*(T s, Jet2<T> a) { return a *= s; }

template <class T>
inline Jet2<T> operator/(const Jet2<T>& f, const Jet2<T>& g) {
  Jet2<T> q;
  q.v = f.v / g.v;
  q.d1 = (f.d1 - q.v * g.d1) / g.v;
  q.d2 = (f.d2 - T(2) * q.d1 * g.d1 - q.v * g.d2) / g.v;
  return q;
}
template <class T>
inline Jet2<T> operator/(const Jet2<T>& f, T s) {
  return {f.v / s, f.d1 / s, f.d2 / s};
}

/// Applies a scalar function given its value and first two derivatives at f.v.
template <class T>
inline Jet2<T> compose(const Jet2<T>& f, T h, T h1, T h2) {
  return {h, h1 * f.d1, h2 * f.d1 * f.d1 + h1 * f.d2};
}

template <class T>
inline Jet2<T> sin(const Jet2<T>& f) {
  using std::cos;
  using std::sin;
  const T s = sin(f.v), c = cos(f.v);
  return compose(f, s, c, -s);
}

template <class T>
inline Jet2<T> cos(const Jet2<T>& f) {
  using std::cos;
  using std::sin;
  const T s = sin(f.v), c = cos(f.v);
  return compose(f, c, -s, -c);
}

template <class T>
inline Jet2<T> exp(const Jet2<T>& f) {
  using std::exp;
  const T e = exp(f.v);
  return compose(f, e, e, e);
}

template <class T>
inline Jet2<T> log(const Jet2<T>& f) {
  using std::log;
  const T inv = T(1) / f.v;
  return compose(f, log(f.v), inv, -inv * inv);
}

template <class T>
inline Jet2<T> sqrt(const Jet2<T>& f) {
  using std::sqrt;
  const T r = sqrt(f.v);
  return compose(f, r, T(0.5) / r, T(-0.25) / (r * f.v));
}

/// snake(z) = z + sin^2(a z)/a with s' = 1 + sin(2 a z), s'' = 2 a cos(2 a z).
template <class T>
inline Jet2<T> snake(const Jet2<T>& f, T a) {
  using std::cos;
  using std::sin;
  const T s = sin(a * f.v);
  const T two_az = T(2) * a * f.v;
  return compose(f, f.v + s * s / a, T(1) + sin(two_az), T(2) * a * cos(two_az));
}

inline double snake(double z, double a) {
  const double s = std::sin(a * z);
  return z + s * s / a;
}

using Jet2d = Jet2<double>;

}  // namespace tubefield

#endif
