#pragma once

#include <span>
#include <string>
#include <vector>

#include "hoqmc/cbcgen.hpp"

namespace hoqmc::bounds {

// p_t = p0 / (1 - t*p0/d); throws InvalidRegime when the denominator is
// nonpositive or the result leaves (0, 1).
double p_t_from(double p0, double t, double d);

// Summability/smoothness exponents of the parametric problem.
struct ProblemExponents {
    double p0 = 0.5;      // summability exponent, in (0, 1)
    double t = 1.0;       // solution-side smoothness order
    double t_prime = 1.0; // functional-side smoothness order
    double d = 2.0;       // spatial dimension

    double tau() const { return t + t_prime; }
    double kappa() const { return p0 / (2.0 - 2.0 * p0); }
    double p_t() const { return p_t_from(p0, t, d); }
    void validate() const; // InvalidRegime on violated invariants
};

// Walsh coefficient bound constant
//   C_{alpha,b} = max(2/(2 sin(pi/b))^alpha, max_{1<=z<=alpha-1} (2 sin(pi/b))^{-z})
//               * (1 + 1/b + 1/(b(b+1)))^{alpha-2} * (3 + 2/b + (2b+1)/(b-1)).
// Requires alpha >= 2 and prime b.
double walsh_factor_C(int alpha, int b);

// rho_{alpha,b}(lambda) = (C_{alpha,b} b^{alpha(alpha-1)/2})^lambda
//                         * ((1 + (b-1)/(b^{alpha*lambda} - b))^alpha - 1),
// defined for 1/alpha < lambda <= 1 (LambdaOutOfRange otherwise).
double rho(int alpha, int b, double lambda);

struct DGammaResult {
    bool divergent = false;
    double log_value = 0.0; // natural log of the majorant series sum
    double value = 0.0;     // exp(log_value); +inf when outside double range
};

// Majorant of the lambda-th power of the weighted rule quality sum:
//   sum_{l>=0} [(l+3)!]^lambda / l! * (sum_j d_j^lambda)^l,
// with d_j = rho^{1/lambda} * 2 * beta_{ceil(j/alpha)} (each beta repeated
// alpha times; the order-doubling factor is majorized by its maximum 2).
// The l=0 term is [3!]^lambda = 6^lambda. Terms are accumulated in log
// space; truncation happens once the term ratio drops below 1 and the
// geometric tail bound is below `tol` relative to the accumulated sum.
// Divergent when lambda = 1 and sum_j d_j >= 1, or when the term ratio
// fails to drop below 1 within the iteration budget. Base b = 2.
DGammaResult d_gamma(double lambda, const cbc::SpodWeightSpec& spec, double tol);

struct TruncationTail {
    double bound = 0.0;         // min(1/(1/p0-1), 1) * (sum_j b_j^p0)^{1/p0} * s^{-(1/p0-1)}
    double exact_partial = 0.0; // sum_{s < j <= J} beta0_j, J = beta0.size()
};

// Dimension-truncation tail estimate for the coefficient bound sequence
// beta0 (entries beta0[j-1] = beta_{0,j} for j = 1..J).
TruncationTail truncation_tail(int s, double p0, std::span<const double> beta0);

enum class Regime { a, b1, b2, c };
std::string regime_name(Regime r);

struct CostExponents {
    double a_sl = 0.0;      // kappa + p0 + d/tau
    double a_ml = 0.0;      // three-case multi-level exponent
    Regime regime = Regime::a;
    bool log_factor = false; // true on the equality boundaries carrying L powers
    bool ml_wins = false;    // a_ml < a_sl
};

// error-versus-cost exponents: single-level cost O(eps^{-a_sl}), multi-level
// cost O(eps^{-a_ml} (log 1/eps)^{b}), with the regime classification
//   a : d/tau <= p_t - d/t
//   b1: p_t - d/t < d/tau < p_t and d/t <= kappa
//   b2: p_t - d/t < d/tau < p_t and d/t >  kappa
//   c : d/tau >= p_t
CostExponents cost_exponents(const ProblemExponents& e);

// Per-level truncation-activity flags: theta[l] = 0 when s_{l+1} == s_l
// (the level adds no new coordinates), else 1; theta[L] = 1. Diagnostic
// only; never feeds the estimator.
std::vector<int> theta_flags(std::span<const long long> s_levels);

} // namespace hoqmc::bounds
