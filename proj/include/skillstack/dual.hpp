#pragma once

#include <cmath>

namespace skillstack {

// Forward-mode dual number: value plus derivative with respect to one seeded
// parameter. The solver is templated on the scalar type, so running it with
// Dual in place of double yields machine-precision derivatives; parameter
// counts are small enough that one pass per parameter is cheap.
struct Dual {
    double v = 0.0;
    double d = 0.0;

    Dual() = default;
    Dual(double value) : v(value) {}
    Dual(double value, double deriv) : v(value), d(deriv) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) {
    const double inv = 1.0 / b.v;
    return {a.v * inv, (a.d - a.v * b.d * inv) * inv};
}

inline bool operator<(Dual a, Dual b) { return a.v < b.v; }
inline bool operator>(Dual a, Dual b) { return a.v > b.v; }
inline bool operator<=(Dual a, Dual b) { return a.v <= b.v; }
inline bool operator>=(Dual a, Dual b) { return a.v >= b.v; }

inline Dual sqrt(Dual a) {
    const double r = std::sqrt(a.v);
    return {r, r > 0.0 ? a.d / (2.0 * r) : 0.0};
}
inline Dual exp(Dual a) {
    const double e = std::exp(a.v);
    return {e, e * a.d};
}
inline Dual log(Dual a) { return {std::log(a.v), a.d / a.v}; }
inline Dual sin(Dual a) { return {std::sin(a.v), std::cos(a.v) * a.d}; }
inline Dual cos(Dual a) { return {std::cos(a.v), -std::sin(a.v) * a.d}; }
inline Dual atan2(Dual y, Dual x) {
    const double den = x.v * x.v + y.v * y.v;
    return {std::atan2(y.v, x.v), (x.v * y.d - y.v * x.d) / den};
}
inline Dual fabs(Dual a) { return a.v < 0.0 ? Dual{-a.v, -a.d} : a; }
// floor is piecewise constant; derivative vanishes almost everywhere
inline Dual floor(Dual a) { return {std::floor(a.v), 0.0}; }
inline Dual fmod(Dual a, Dual b) {
    return {std::fmod(a.v, b.v), a.d - std::trunc(a.v / b.v) * b.d};
}

inline double value_of(double x) { return x; }
inline double value_of(Dual x) { return x.v; }

// Complex number over an arbitrary real scalar (double or Dual). std::complex
// only supports floating-point types, hence the hand-rolled version.
template <class T>
struct Cx {
    T re{};
    T im{};

    Cx() = default;
    Cx(T r) : re(r) {}
    Cx(T r, T i) : re(r), im(i) {}
};

template <class T> Cx<T> operator+(Cx<T> a, Cx<T> b) { return {a.re + b.re, a.im + b.im}; }
template <class T> Cx<T> operator-(Cx<T> a, Cx<T> b) { return {a.re - b.re, a.im - b.im}; }
template <class T> Cx<T> operator-(Cx<T> a) { return {-a.re, -a.im}; }
template <class T> Cx<T> operator*(Cx<T> a, Cx<T> b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
template <class T> Cx<T> operator*(T s, Cx<T> a) { return {s * a.re, s * a.im}; }
template <class T> Cx<T> operator*(Cx<T> a, T s) { return {a.re * s, a.im * s}; }
template <class T> Cx<T> operator/(Cx<T> a, Cx<T> b) {
    const T den = b.re * b.re + b.im * b.im;
    return {(a.re * b.re + a.im * b.im) / den, (a.im * b.re - a.re * b.im) / den};
}
template <class T> Cx<T> operator/(Cx<T> a, T s) { return {a.re / s, a.im / s}; }

template <class T> Cx<T> conj(Cx<T> a) { return {a.re, -a.im}; }
template <class T> T abs_sq(Cx<T> a) { return a.re * a.re + a.im * a.im; }

template <class T> T abs(Cx<T> a) {
    using std::sqrt;
    return sqrt(a.re * a.re + a.im * a.im);
}

// principal square root via the polar form
template <class T> Cx<T> sqrt(Cx<T> z) {
    using std::atan2;
    using std::cos;
    using std::sin;
    using std::sqrt;
    const T r = sqrt(skillstack::abs(z));
    const T half_arg = T(0.5) * atan2(z.im, z.re);
    return {r * cos(half_arg), r * sin(half_arg)};
}

template <class T> Cx<T> exp(Cx<T> z) {
    using std::cos;
    using std::exp;
    using std::sin;
    const T m = exp(z.re);
    return {m * cos(z.im), m * sin(z.im)};
}

} // namespace skillstack
