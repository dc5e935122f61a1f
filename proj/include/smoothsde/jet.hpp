#pragma once

// Second-order forward-mode automatic differentiation over a fixed number of
// independent variables. Used to get exact local gradients and Hessians of
// transition log-densities and Kalman filter steps.

#include <array>
#include <cmath>

namespace smoothsde {

template <int N>
struct Jet {
    double v = 0.0;
    std::array<double, N> g{};
    std::array<double, N * N> h{};  // row-major, kept symmetric

    Jet() = default;
    Jet(double value) : v(value) {}  // NOLINT: constants promote implicitly

    static Jet variable(double value, int index) {
        Jet j(value);
        j.g[index] = 1.0;
        return j;
    }

    double hess(int i, int k) const { return h[i * N + k]; }
};

namespace detail {

// Compose a scalar function f with first and second derivatives d1, d2.
template <int N>
Jet<N> chain(const Jet<N>& a, double f, double d1, double d2) {
    Jet<N> r(f);
    for (int i = 0; i < N; ++i) r.g[i] = d1 * a.g[i];
    for (int i = 0; i < N; ++i)
        for (int k = i; k < N; ++k)
            r.h[i * N + k] = r.h[k * N + i] = d1 * a.h[i * N + k] + d2 * a.g[i] * a.g[k];
    return r;
}

}  // namespace detail

template <int N>
Jet<N> operator+(const Jet<N>& a, const Jet<N>& b) {
    Jet<N> r(a.v + b.v);
    for (int i = 0; i < N; ++i) r.g[i] = a.g[i] + b.g[i];
    for (int i = 0; i < N * N; ++i) r.h[i] = a.h[i] + b.h[i];
    return r;
}

template <int N>
Jet<N> operator-(const Jet<N>& a, const Jet<N>& b) {
    Jet<N> r(a.v - b.v);
    for (int i = 0; i < N; ++i) r.g[i] = a.g[i] - b.g[i];
    for (int i = 0; i < N * N; ++i) r.h[i] = a.h[i] - b.h[i];
    return r;
}

template <int N>
Jet<N> operator-(const Jet<N>& a) {
    Jet<N> r(-a.v);
    for (int i = 0; i < N; ++i) r.g[i] = -a.g[i];
    for (int i = 0; i < N * N; ++i) r.h[i] = -a.h[i];
    return r;
}

template <int N>
Jet<N> operator*(const Jet<N>& a, const Jet<N>& b) {
    Jet<N> r(a.v * b.v);
    for (int i = 0; i < N; ++i) r.g[i] = a.g[i] * b.v + b.g[i] * a.v;
    for (int i = 0; i < N; ++i)
        for (int k = i; k < N; ++k)
            r.h[i * N + k] = r.h[k * N + i] =
                a.h[i * N + k] * b.v + b.h[i * N + k] * a.v + a.g[i] * b.g[k] + a.g[k] * b.g[i];
    return r;
}

template <int N>
Jet<N> operator*(double c, const Jet<N>& a) {
    Jet<N> r(c * a.v);
    for (int i = 0; i < N; ++i) r.g[i] = c * a.g[i];
    for (int i = 0; i < N * N; ++i) r.h[i] = c * a.h[i];
    return r;
}

template <int N>
Jet<N> operator*(const Jet<N>& a, double c) {
    return c * a;
}

template <int N>
Jet<N> inv(const Jet<N>& a) {
    const double x = 1.0 / a.v;
    return detail::chain(a, x, -x * x, 2.0 * x * x * x);
}

template <int N>
Jet<N> operator/(const Jet<N>& a, const Jet<N>& b) {
    return a * inv(b);
}

template <int N>
Jet<N> operator/(const Jet<N>& a, double c) {
    return (1.0 / c) * a;
}

template <int N>
Jet<N> operator/(double c, const Jet<N>& a) {
    return c * inv(a);
}

template <int N>
Jet<N> operator+(const Jet<N>& a, double c) {
    Jet<N> r = a;
    r.v += c;
    return r;
}

template <int N>
Jet<N> operator+(double c, const Jet<N>& a) {
    return a + c;
}

template <int N>
Jet<N> operator-(const Jet<N>& a, double c) {
    return a + (-c);
}

template <int N>
Jet<N> operator-(double c, const Jet<N>& a) {
    return (-a) + c;
}

template <int N>
Jet<N>& operator+=(Jet<N>& a, const Jet<N>& b) {
    a = a + b;
    return a;
}

template <int N>
Jet<N> exp(const Jet<N>& a) {
    const double e = std::exp(a.v);
    return detail::chain(a, e, e, e);
}

template <int N>
Jet<N> expm1(const Jet<N>& a) {
    const double e = std::exp(a.v);
    return detail::chain(a, std::expm1(a.v), e, e);
}

template <int N>
Jet<N> log(const Jet<N>& a) {
    const double x = 1.0 / a.v;
    return detail::chain(a, std::log(a.v), x, -x * x);
}

template <int N>
Jet<N> log1p(const Jet<N>& a) {
    const double x = 1.0 / (1.0 + a.v);
    return detail::chain(a, std::log1p(a.v), x, -x * x);
}

template <int N>
Jet<N> sqrt(const Jet<N>& a) {
    const double s = std::sqrt(a.v);
    return detail::chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}

inline double value_of(double x) { return x; }

template <int N>
double value_of(const Jet<N>& a) {
    return a.v;
}

}  // namespace smoothsde
