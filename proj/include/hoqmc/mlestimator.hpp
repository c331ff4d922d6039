#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hoqmc/bounds.hpp"
#include "hoqmc/cbcgen.hpp"
#include "hoqmc/plattice.hpp"

namespace hoqmc::ml {

// ---------------------------------------------------------------------------
// Level planner
// ---------------------------------------------------------------------------

enum class PlanMode {
    paper4,   // the concrete schedule used by the convergence experiment
    general,  // the abstract cost-balancing schedule driven by exponents
};

struct LevelSpec {
    int level = 0;
    double h = 0.0;       // 2^-(level+1)
    long long s = 0;      // truncation dimension
    int m = 0;            // rule size exponent, N = 2^m
    long long N = 0;
};

struct LevelPlan {
    int L = 0;
    PlanMode mode = PlanMode::paper4;
    int m_cap = 20;
    bounds::ProblemExponents exponents;
    std::vector<LevelSpec> levels;  // size L+1, index = level
};

// Level parameters for a target finest level L.
//
// paper4 mode: h_l = 2^-(l+1), s_l = min(2^(4l), 2^L), N_0 = 2^(2L),
// N_l = (2^(2(L-2l)) / s_l)^(2/5) for l >= 1. The two N displays are
// mutually inconsistent at l = 0; N_0 = 2^(2L) takes precedence.
//
// general mode: s_l = min(ceil(2^(l tau d / t)), ceil(2^(L tau kappa))),
// N_l = ceil(N_0 (h_0^(-tau-d) s_0 h_l^(tau+d) / s_l)^(p_t/(p_t+1))), and
// N_0 from the five-case cost balance on (d/tau vs p_t - d/t, p_t).
//
// In both modes every N_l is rounded up to a power of two via
// m_l = ceil(log2 N_l), clamped to [1, m_cap].
LevelPlan plan_levels(int L, const bounds::ProblemExponents& exponents, PlanMode mode,
                      int m_cap = 20);

// ---------------------------------------------------------------------------
// Integrand seam: anything that maps (parameter vector, mesh level,
// truncation dimension) to a functional value. The production implementation
// is the PDE solve; tests substitute cheap deterministic stand-ins.
// ---------------------------------------------------------------------------

class LevelIntegrand {
  public:
    virtual ~LevelIntegrand() = default;
    virtual double evaluate(std::span<const double> y, int level, int s) const = 0;
};

// G(u_s^{h_level}(y)) via the finite-element solve.
class PdeIntegrand final : public LevelIntegrand {
  public:
    double evaluate(std::span<const double> y, int level, int s) const override;
};

class ConstantIntegrand final : public LevelIntegrand {
  public:
    explicit ConstantIntegrand(double value) : value_(value) {}
    double evaluate(std::span<const double>, int, int) const override { return value_; }

  private:
    double value_ = 0.0;
};

// ---------------------------------------------------------------------------
// Rule supply
// ---------------------------------------------------------------------------

// SPOD weight specifications attached to the coefficient model: order 2
// interlacing with beta_j = lambda_j (single-level) or
// beta_j = lambda_j * pi * max(k1_j, k2_j) (multi-level differences).
cbc::SpodWeightSpec sl_weight_spec(int s, double walsh_constant = 1.0);
cbc::SpodWeightSpec ml_weight_spec(int s, double walsh_constant = 1.0);

// Maps (m, s) to a constructed interlaced rule; the weight family is bound
// by whoever creates the provider.
using RuleProvider = std::function<plat::InterlacedRule(int m, int s)>;

// CBC output store: rules are memoized in-process and, when a directory is
// given, persisted as rule files keyed by (m, s, alpha, weight fingerprint).
// A present-but-unreadable or mismatched cache file raises CacheCorrupt.
class DiskRuleCache {
  public:
    explicit DiskRuleCache(std::string directory = "", int threads = 1,
                           cbc::ScanPath path = cbc::ScanPath::automatic);

    plat::InterlacedRule get(int m, int s, int alpha, const cbc::SpodWeightSpec& spec);

    const std::string& directory() const { return directory_; }

  private:
    std::string directory_;
    int threads_ = 1;
    cbc::ScanPath path_ = cbc::ScanPath::automatic;
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

struct LevelContribution {
    int level = 0;
    long long s = 0;
    int m = 0;
    long long N = 0;
    double mean = 0.0;  // (1/N) sum of this level's difference values
    double work = 0.0;  // N * h^-2 * s
};

struct EstimateRecord {
    double estimate = 0.0;
    double work = 0.0;
    std::vector<LevelContribution> levels;
    std::vector<std::string> rule_ids;
};

// Equal-weight QMC average of the integrand at a fixed mesh level and
// truncation dimension over all (centered) points of `rule`.
double rule_mean(const plat::InterlacedRule& rule, const LevelIntegrand& integrand, int level,
                 int s, int threads = 1);

// Single-level estimator at finest level L: s = N = 2^(L+1), m = L+1,
// estimate = (1/N) sum_n G(u_s^{h_L}(y_n - 1/2)), work = h_L^-2 * s * N.
EstimateRecord single_level_estimate(int L, const RuleProvider& rules,
                                     const LevelIntegrand& integrand, int threads = 1);

// Multi-level telescoping estimator over a plan. Each level-l difference
// evaluates fine and coarse terms at the same shifted point, the coarse term
// consuming the first s_{l-1} coordinates; the l = 0 term is the plain mean.
EstimateRecord multi_level_estimate(const LevelPlan& plan, const RuleProvider& rules,
                                    const LevelIntegrand& integrand, int threads = 1);

// ---------------------------------------------------------------------------
// Dimension-truncation study: fixed mesh level and rule size, varying
// truncation dimension against a larger reference dimension.
// ---------------------------------------------------------------------------

struct TruncationRecord {
    int s = 0;
    double estimate = 0.0;
    double error = 0.0;  // |estimate - reference estimate|
};

std::vector<TruncationRecord> dimension_truncation_study(
    int level, int m, std::span<const int> s_values, int s_reference,
    const RuleProvider& rules, const LevelIntegrand& integrand, int threads = 1);

} // namespace hoqmc::ml
