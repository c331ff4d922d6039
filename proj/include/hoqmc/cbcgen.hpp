#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hoqmc/gf2poly.hpp"
#include "hoqmc/plattice.hpp"

namespace hoqmc::cbc {

enum class OrderFactor {
    shifted_factorial, // Gamma_l = (l+3)!, the default order weight
    plain_factorial,   // Gamma_l = l!, the simplified level-0 variant
};

// Smoothness-driven product-and-order-dependent weights
// gamma_u = sum_{nu_u in {1..alpha}^{|u|}} Gamma_{|nu_u|} prod_j w_j(nu_j)
// with per-order coordinate weight w_j(nu) = 2^{[nu==alpha]} beta_j^nu.
// The order-doubling factor applies only for alpha >= 2; at alpha = 1 the
// weight is plain beta_j.
struct SpodWeightSpec {
    int alpha = 2;
    std::vector<double> beta;
    double walsh_constant = 1.0;
    OrderFactor order_factor = OrderFactor::shifted_factorial;

    int s() const { return static_cast<int>(beta.size()); }
    double coord_weight(int j, int nu) const; // j 1-based, nu in [1, alpha]
    SpodWeightSpec truncated(int s) const;
    void validate() const;
    // Stable hash of (alpha, order_factor, walsh_constant, beta); cache key
    // component for constructed rules.
    std::uint64_t fingerprint() const;
};

// gamma_u for a set u of 1-based coordinate indices. Falls back to a
// log-domain recursion for large |u|; throws Overflow only when the value
// itself exceeds double range.
double spod_weight(std::span<const int> u, const SpodWeightSpec& spec);

// Closed form of sum_{k>=1} 2^{-alpha*a1(k)} walsh(k, x), a1(k) the 1-based
// most-significant-bit position of k, for dyadic x in [0,1). Requires
// alpha >= 2 (the series diverges at alpha = 1 for x = 0).
double kernel_phi(double x, int alpha);

// Scan kernel used by the driver. `first_digit` is the closed-form
// kernel_phi above: every dual index k is priced by its deepest one-digit
// alone, which lets the scan minimizer hide error mass in candidates whose
// joint duals differ only in deeper digits. `depth_weighted` prices k by
// the sum of its min(v, alpha) deepest one-digit positions, the decay rate
// the interlaced digit map actually delivers for smooth integrands; both
// kernels agree on single-digit duals. Construction uses depth_weighted.
enum class CbcKernel {
    first_digit,
    depth_weighted,
};

// Table of the depth-weighted kernel: entry x (an m-digit numerator, first
// fractional digit in the top bit) is
//   omega(x) = sum_{k>=1} 2^{-mu(k)} walsh(k, x),
// mu(k) = alpha * (sum of the min(v, alpha) deepest one-digit positions of
// k), v the number of one-digits. Digits of k beyond depth m are folded in
// exactly via geometric tail sums, so the table equals the full infinite
// series. Requires alpha >= 2.
std::vector<double> depth_kernel_table(int m, int alpha);

struct CbcResult {
    plat::InterlacedRule rule;
    std::vector<double> criterion_history; // minimum at each sub-component step
    long long pruned = 0;                  // candidate evaluations skipped by the no-repeat rule
};

// Worst-case-error surrogate
//   E = (1/N) sum_n sum_{l>=1} Gamma_l S_n(l)
// where S_n is accumulated per coordinate j via
//   S_n'(l) = S_n(l) + sum_{nu=1}^{min(alpha,l)} w_j(nu) K_n(j) S_n(l-nu)
// and K_n(j) = walsh_constant * (prod_{c=1}^{alpha} (1 + phi(x_n^{(j,c)})) - 1).
// Orders whose relative contribution drops below 1e-30 are truncated.
double criterion(const plat::InterlacedRule& rule, const SpodWeightSpec& spec);

// The quantity cbc_construct minimizes: the same order recursion as
// `criterion`, with kernel_phi replaced by the depth-weighted table of each
// interlaced stream. Exposed so exhaustive-search oracles can rank candidate
// rules by exactly what the greedy construction sees.
double construction_objective(const plat::InterlacedRule& rule, const SpodWeightSpec& spec);

enum class ScanPath {
    automatic, // direct loops below the fast-transform crossover, FFT above
    direct,    // O(N) per candidate loops (the defining semantics)
    fft,       // group-cyclic correlation via FFT
};

// Component-by-component construction: for sub-components c = 1..alpha*s,
// pick the candidate q (nonzero, degree < m, unused so far when prune is on)
// minimizing the depth-weighted objective of the partial rule; ties break to
// the smallest integer encoding. criterion_history records that objective.
// A zero `modulus` selects smallest_irreducible(m).
CbcResult cbc_construct(int m, int s, int alpha, const SpodWeightSpec& spec, bool prune,
                        gf2::BitPolynomial modulus = {}, int threads = 1,
                        ScanPath path = ScanPath::automatic);

// Equal-weight QMC average (1/N) sum_n F(y_n) with y_n centered to
// [-1/2,1/2)^s (the shift is applied here when `pts` is not already
// centered); deterministic pairwise summation.
double qmc_integrate(const plat::PointSet& pts,
                     const std::function<double(std::span<const double>)>& integrand);

// Incremental CBC state machine. cbc_construct drives it; it is public so
// tests can probe a single step's candidate array.
class CbcDriver {
public:
    CbcDriver(int m, int s, int alpha, SpodWeightSpec spec, gf2::BitPolynomial modulus,
              int threads = 1, ScanPath path = ScanPath::automatic,
              CbcKernel kernel = CbcKernel::first_digit);
    ~CbcDriver();
    CbcDriver(const CbcDriver&) = delete;
    CbcDriver& operator=(const CbcDriver&) = delete;

    int total_steps() const;
    int steps_done() const;

    struct StepChoice {
        std::uint32_t q;
        double criterion;
    };
    // Minimizing candidate at the current step; `excluded`, when non-null,
    // maps encoding q to a skip flag (the pruning rule). Also reports how
    // many candidates were skipped.
    StepChoice select(const std::vector<char>* excluded, long long* skipped = nullptr) const;

    // Criterion value per candidate encoding (index q-1), by the direct
    // loops. k_scale multiplies the active coordinate's kernel factor.
    std::vector<double> candidate_values(double k_scale = 1.0) const;

    // Commit generator q for the current sub-component.
    void choose(std::uint32_t q);

    // Criterion of the rule built so far (all coordinates complete).
    double full_criterion() const;

    std::vector<gf2::BitPolynomial> chosen() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace hoqmc::cbc
