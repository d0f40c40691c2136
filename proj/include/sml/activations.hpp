// Scalar activations with exact derivatives.
//
// GELU uses the exact erf form x * Phi(x), not the tanh approximation, so
// that finite-difference checks close to machine precision.
#pragma once

#include <cmath>

namespace sml {

inline constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

// Standard-normal CDF.
inline double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }

// Standard-normal PDF.
inline double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

inline double gelu(double x) { return x * norm_cdf(x); }

// d/dx [x * Phi(x)] = Phi(x) + x * phi(x)
inline double gelu_grad(double x) { return norm_cdf(x) + x * norm_pdf(x); }

// Numerically stable logistic sigmoid, output in (0,1).
inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow on either tail.
inline double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

// log(1 - sigmoid(x)) = log_sigmoid(-x)
inline double log_one_minus_sigmoid(double x) { return log_sigmoid(-x); }

}  // namespace sml
