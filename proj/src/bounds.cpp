#include "hoqmc/bounds.hpp"

#include <cmath>
#include <limits>

#include "hoqmc/errors.hpp"

namespace hoqmc::bounds {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr long long kMaxSeriesTerms = 100000000ll;

bool is_prime(int b) {
    if (b < 2) return false;
    for (int d = 2; d * d <= b; ++d)
        if (b % d == 0) return false;
    return true;
}

double log_sum_exp(double a, double b) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    if (a == neg_inf) return b;
    if (b == neg_inf) return a;
    double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

} // namespace

double p_t_from(double p0, double t, double d) {
    if (!(p0 > 0.0)) throw InvalidRegime("p0 must be positive");
    if (!(d > 0.0)) throw InvalidRegime("spatial dimension must be positive");
    if (t < 0.0) throw InvalidRegime("smoothness order must be nonnegative");
    double denom = 1.0 - t * p0 / d;
    if (!(denom > 0.0)) throw InvalidRegime("1 - t*p0/d must be positive");
    double pt = p0 / denom;
    if (!(pt < 1.0)) throw InvalidRegime("p_t must stay below 1");
    return pt;
}

void ProblemExponents::validate() const {
    if (!(p0 > 0.0 && p0 < 1.0)) throw InvalidRegime("p0 must lie in (0,1)");
    if (t < 0.0 || t_prime < 0.0) throw InvalidRegime("smoothness orders must be nonnegative");
    if (!(tau() > 0.0)) throw InvalidRegime("tau = t + t' must be positive");
    if (!(d > 0.0)) throw InvalidRegime("spatial dimension must be positive");
    (void)p_t(); // InvalidRegime when p_t leaves (0,1)
}

double walsh_factor_C(int alpha, int b) {
    if (alpha < 2) throw AlphaTooSmall();
    if (!is_prime(b)) throw Error(ErrorKind::validation, "walsh factor base must be prime");
    double sb = 2.0 * std::sin(kPi / static_cast<double>(b));
    double head = 2.0 / std::pow(sb, alpha);
    for (int z = 1; z <= alpha - 1; ++z) head = std::max(head, std::pow(sb, -z));
    double mid = std::pow(1.0 + 1.0 / b + 1.0 / (static_cast<double>(b) * (b + 1)),
                          alpha - 2);
    double tail = 3.0 + 2.0 / b + (2.0 * b + 1.0) / (b - 1.0);
    return head * mid * tail;
}

double rho(int alpha, int b, double lambda) {
    if (alpha < 2) throw AlphaTooSmall();
    if (!(lambda > 1.0 / alpha) || !(lambda <= 1.0)) throw LambdaOutOfRange();
    double c = walsh_factor_C(alpha, b);
    double lead = std::pow(c * std::pow(static_cast<double>(b),
                                        0.5 * alpha * (alpha - 1)),
                           lambda);
    double denom = std::pow(static_cast<double>(b), alpha * lambda) - b;
    double inner = std::pow(1.0 + (b - 1.0) / denom, alpha) - 1.0;
    return lead * inner;
}

DGammaResult d_gamma(double lambda, const cbc::SpodWeightSpec& spec, double tol) {
    spec.validate();
    int alpha = spec.alpha;
    if (alpha < 2) throw AlphaTooSmall();
    if (!(lambda > 1.0 / alpha) || !(lambda <= 1.0)) throw LambdaOutOfRange();
    if (!(tol > 0.0)) throw Error(ErrorKind::validation, "tolerance must be positive");

    double r = rho(alpha, 2, lambda);
    // x = sum_j d_j^lambda with d_j = rho^{1/lambda} * 2 * beta_{ceil(j/alpha)}
    double x = 0.0;
    for (double b : spec.beta) x += std::pow(b, lambda);
    x *= static_cast<double>(alpha) * r * std::pow(2.0, lambda);

    DGammaResult out;
    if (lambda == 1.0 && x >= 1.0) {
        out.divergent = true;
        out.log_value = std::numeric_limits<double>::infinity();
        out.value = std::numeric_limits<double>::infinity();
        return out;
    }

    double log_x = std::log(x); // -inf when x == 0
    double log_term = lambda * std::log(6.0);
    double log_total = log_term;
    double log_tol = std::log(tol);
    bool settled = (x == 0.0);
    for (long long l = 0; !settled && l < kMaxSeriesTerms; ++l) {
        // term ratio t_{l+1}/t_l = (l+4)^lambda * x / (l+1)
        double log_ratio = lambda * std::log(static_cast<double>(l) + 4.0) + log_x -
                           std::log(static_cast<double>(l) + 1.0);
        log_term += log_ratio;
        log_total = log_sum_exp(log_total, log_term);
        if (log_ratio < 0.0) {
            // ratios decrease monotonically, so the dropped tail is below
            // t_{l+2}/(1 - ratio)
            double log_tail = log_term + log_ratio - std::log1p(-std::exp(log_ratio));
            if (log_tail < log_total + log_tol) settled = true;
        }
    }
    if (!settled) {
        out.divergent = true;
        out.log_value = std::numeric_limits<double>::infinity();
        out.value = std::numeric_limits<double>::infinity();
        return out;
    }
    out.log_value = log_total;
    out.value = log_total > std::log(std::numeric_limits<double>::max())
                    ? std::numeric_limits<double>::infinity()
                    : std::exp(log_total);
    return out;
}

TruncationTail truncation_tail(int s, double p0, std::span<const double> beta0) {
    if (s < 1) throw Error(ErrorKind::validation, "truncation dimension must be >= 1");
    if (!(p0 > 0.0 && p0 < 1.0))
        throw Error(ErrorKind::validation, "truncation bound requires p0 in (0,1)");
    double psum = 0.0;
    for (double b : beta0) {
        if (b < 0.0) throw Error(ErrorKind::validation, "beta0 entries must be nonnegative");
        psum += std::pow(b, p0);
    }
    double rate = 1.0 / p0 - 1.0;
    TruncationTail out;
    out.bound = std::min(1.0 / rate, 1.0) * std::pow(psum, 1.0 / p0) *
                std::pow(static_cast<double>(s), -rate);
    for (std::size_t j = static_cast<std::size_t>(s); j < beta0.size(); ++j)
        out.exact_partial += beta0[j];
    return out;
}

std::string regime_name(Regime r) {
    switch (r) {
    case Regime::a: return "a";
    case Regime::b1: return "b1";
    case Regime::b2: return "b2";
    case Regime::c: return "c";
    }
    throw Error(ErrorKind::validation, "unknown regime");
}

CostExponents cost_exponents(const ProblemExponents& e) {
    e.validate();
    double tau = e.tau();
    double kappa = e.kappa();
    double pt = e.p_t();
    double d_tau = e.d / tau;
    double d_t = e.t > 0.0 ? e.d / e.t : std::numeric_limits<double>::infinity();
    double m = std::min(d_t, kappa);

    CostExponents out;
    out.a_sl = kappa + e.p0 + d_tau;
    if (d_tau <= pt - d_t) {
        out.regime = Regime::a;
        out.a_ml = pt;
        out.log_factor = (d_tau == pt - d_t);
    } else if (d_tau < pt) {
        out.regime = d_t <= kappa ? Regime::b1 : Regime::b2;
        // p_t + t*min(d/t, kappa)*(1/tau - p_t/d + 1/t), written so t = 0
        // stays finite (the min is then kappa and t/t cancels exactly)
        out.a_ml = pt + m * (e.t / tau - e.t * pt / e.d + 1.0);
        out.log_factor = false;
    } else {
        out.regime = Regime::c;
        out.a_ml = d_tau + m;
        out.log_factor = (d_tau == pt);
    }
    out.ml_wins = out.a_ml < out.a_sl;
    return out;
}

std::vector<int> theta_flags(std::span<const long long> s_levels) {
    std::vector<int> theta(s_levels.size(), 1);
    for (std::size_t l = 1; l < s_levels.size(); ++l) {
        if (s_levels[l] == s_levels[l - 1]) theta[l - 1] = 0;
    }
    return theta;
}

} // namespace hoqmc::bounds
