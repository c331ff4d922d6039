// Acceptance gate: one self-contained check per shipped guarantee, each
// printing a single [PASS]/[FAIL] line with the measured values and the
// pinned tolerance. The process exits nonzero when any check fails.
//
//  1 convergence-slopes   error-vs-work slopes of both estimators at L_max=5
//  2 cost-exponents       closed-form work exponents, exact values
//  3 constant-evaluators  Walsh-bound constants against hand evaluation
//  4 digital-net-exactness 1D projections and character sums, all m <= 8
//  5 cbc-optimality       CBC result equals the exhaustive-search optimum
//  6 quadrature-order     interlaced rule order on a smooth product integrand
//  7 fem-order            functional convergence order of the P1 solver
//  8 telescoping          multi-level with a constant plan equals one level
//  9 truncation-decay     dimension-truncation error decay order
// 10 criterion-oracle     CBC criterion against the direct double sum

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "hoqmc/bounds.hpp"
#include "hoqmc/cbcgen.hpp"
#include "hoqmc/errors.hpp"
#include "hoqmc/gf2poly.hpp"
#include "hoqmc/harness.hpp"
#include "hoqmc/mlestimator.hpp"
#include "hoqmc/pdemodel.hpp"
#include "hoqmc/plattice.hpp"
#include "hoqmc/util.hpp"

namespace {

using namespace hoqmc;

struct Outcome {
    bool pass = false;
    std::string text;
};

std::string format(const char* fmt, ...) {
    char buffer[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buffer, sizeof buffer, fmt, args);
    va_end(args);
    return buffer;
}

std::uint64_t lcg(std::uint64_t& state) {
    state = state * 6364136223846793005ull + 1442695040888963407ull;
    return state >> 16;
}

plat::InterlacedRule make_rule(int m, int s, int alpha, const std::vector<std::uint64_t>& gens) {
    plat::InterlacedRule r;
    r.m = m;
    r.s = s;
    r.alpha = alpha;
    r.modulus = gf2::smallest_irreducible(m);
    for (std::uint64_t g : gens) r.generators.push_back(gf2::BitPolynomial{g});
    return r;
}

cbc::SpodWeightSpec make_spec(int alpha, std::vector<double> beta, double c = 1.0) {
    cbc::SpodWeightSpec spec;
    spec.alpha = alpha;
    spec.beta = std::move(beta);
    spec.walsh_constant = c;
    return spec;
}

// Independent restatement of the criterion as the direct double sum
//   sum_{nonempty u} sum_{nu_u in {1..alpha}^{|u|}} Gamma_{|nu_u|}
//     prod_j w_j(nu_j) * (1/N) sum_n prod_{j in u} K_n(j),
// evaluated with no recursion and no order truncation.
double criterion_oracle(const plat::InterlacedRule& rule, const cbc::SpodWeightSpec& spec) {
    const int N = 1 << rule.m;
    const int s = rule.s;
    const int alpha = rule.alpha;
    std::vector<std::vector<double>> kfac(static_cast<std::size_t>(N),
                                          std::vector<double>(static_cast<std::size_t>(s)));
    for (int n = 0; n < N; ++n) {
        for (int j = 1; j <= s; ++j) {
            double prod = 1.0;
            for (int l = 1; l <= alpha; ++l) {
                int c = (j - 1) * alpha + l;
                double x = std::ldexp(static_cast<double>(plat::raw_component(
                                          rule, static_cast<std::uint64_t>(n), c)),
                                      -rule.m);
                prod *= 1.0 + cbc::kernel_phi(x, alpha);
            }
            kfac[static_cast<std::size_t>(n)][static_cast<std::size_t>(j - 1)] =
                spec.walsh_constant * (prod - 1.0);
        }
    }
    double total = 0.0;
    for (int mask = 1; mask < (1 << s); ++mask) {
        std::vector<int> coords;
        for (int j = 0; j < s; ++j)
            if (mask & (1 << j)) coords.push_back(j);
        double mean = 0.0;
        for (int n = 0; n < N; ++n) {
            double p = 1.0;
            for (int j : coords)
                p *= kfac[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
            mean += p;
        }
        mean /= static_cast<double>(N);
        std::vector<int> nu(coords.size(), 1);
        while (true) {
            int order = std::accumulate(nu.begin(), nu.end(), 0);
            double w = 1.0;
            for (int i = 2; i <= order + 3; ++i) w *= static_cast<double>(i);
            for (std::size_t i = 0; i < coords.size(); ++i)
                w *= spec.coord_weight(coords[i] + 1, nu[i]);
            total += w * mean;
            std::size_t pos = 0;
            while (pos < nu.size() && nu[pos] == spec.alpha) nu[pos++] = 1;
            if (pos == nu.size()) break;
            ++nu[pos];
        }
    }
    return total;
}

// Minimum of the construction objective over every full generator vector
// (all entries nonzero, degree < m), odometer enumeration.
double exhaustive_min(int m, int s, int alpha, const cbc::SpodWeightSpec& spec) {
    const std::uint64_t top = (1ull << m) - 1;
    const int len = alpha * s;
    std::vector<std::uint64_t> gens(static_cast<std::size_t>(len), 1);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        double e = cbc::construction_objective(make_rule(m, s, alpha, gens), spec);
        if (e < best) best = e;
        int pos = len - 1;
        while (pos >= 0 && gens[static_cast<std::size_t>(pos)] == top) {
            gens[static_cast<std::size_t>(pos--)] = 1;
        }
        if (pos < 0) break;
        ++gens[static_cast<std::size_t>(pos)];
    }
    return best;
}

// ---------------------------------------------------------------------------

Outcome check_convergence_slopes(int threads) {
    harness::StudyConfig cfg;
    cfg.L_max = 5;
    cfg.reference_level = 6;
    cfg.reference_s = 512;
    cfg.reference_m = 15;
    cfg.threads = threads;
    cfg.cache_dir = "acceptance-cache";
    cfg.out_dir = "acceptance-out";

    ml::DiskRuleCache rules(cfg.cache_dir, threads);
    ml::PdeIntegrand integrand;
    auto records = harness::run_study(cfg, rules, integrand);

    std::vector<harness::ConvergenceRecord> ml_rows, sl_rows;
    for (const auto& r : records) (r.algorithm == "ML" ? ml_rows : sl_rows).push_back(r);
    double ml_slope = harness::fit_slope(ml_rows, 5);
    double sl_slope = harness::fit_slope(sl_rows, 5);

    bool pass = ml_slope >= -0.87 && ml_slope <= -0.47 && sl_slope >= -0.65 &&
                sl_slope <= -0.35;
    return {pass, format("convergence-slopes: ML slope %.3f in [-0.87,-0.47], "
                         "SL slope %.3f in [-0.65,-0.35] (L_max=5, reference level 6, "
                         "s=512, 2^15 points)",
                         ml_slope, sl_slope)};
}

Outcome check_cost_exponents() {
    bounds::ProblemExponents e{0.5, 1.0, 1.0, 2.0};
    bounds::CostExponents ce = bounds::cost_exponents(e);
    double pt = bounds::p_t_from(0.5, 1.0, 2.0);
    bool pass = ce.a_sl == 2.0 && ce.a_ml == 1.5 && pt == 2.0 / 3.0;
    return {pass, format("cost-exponents: a_sl=%.17g (want 2), a_ml=%.17g (want 1.5), "
                         "p_t=%.17g (want 2/3), all exact",
                         ce.a_sl, ce.a_ml, pt)};
}

Outcome check_constant_evaluators() {
    double c = bounds::walsh_factor_C(2, 2);
    double r = bounds::rho(2, 2, 1.0);
    double c_err = std::abs(c - 4.5) / 4.5;
    double r_err = std::abs(r - 11.25) / 11.25;
    bool pass = c_err <= 1e-14 && r_err <= 1e-14;
    return {pass, format("constant-evaluators: C(2,2)=%.17g vs 4.5 (rel %.2g), "
                         "rho(2,2,1)=%.17g vs 11.25 (rel %.2g), tol 1e-14",
                         c, c_err, r, r_err)};
}

Outcome check_digital_net_exactness() {
    std::uint64_t seed = 20260815;
    long long bad_projections = 0;
    long long bad_sums = 0;
    long long checked_sums = 0;
    for (int m = 1; m <= 8; ++m) {
        for (int alpha : {2, 3}) {
            const int s = 3;
            std::vector<std::uint64_t> gens;
            for (int i = 0; i < alpha * s; ++i) gens.push_back(lcg(seed) % ((1u << m) - 1) + 1);
            plat::InterlacedRule rule = make_rule(m, s, alpha, gens);
            const int N = 1 << m;

            // Every 1D raw projection is the full grid {0, 1, ..., N-1}/N.
            for (int c = 1; c <= alpha * s; ++c) {
                std::vector<std::uint32_t> seen;
                for (int n = 0; n < N; ++n)
                    seen.push_back(plat::raw_component(rule, static_cast<std::uint64_t>(n), c));
                std::sort(seen.begin(), seen.end());
                for (int i = 0; i < N; ++i) {
                    if (seen[static_cast<std::size_t>(i)] != static_cast<std::uint32_t>(i)) {
                        ++bad_projections;
                        break;
                    }
                }
            }

            // Character sums over the interlaced digits are exactly 0 or N.
            plat::PointSet pts = plat::generate(rule);
            const int digits = alpha * m;
            const std::uint64_t kspace = (1ull << digits) - 1;
            for (int j = 1; j <= s; ++j) {
                for (int trial = 0; trial < 1000; ++trial) {
                    std::uint64_t k = lcg(seed) % kspace + 1;
                    long long sum = 0;
                    for (int n = 0; n < N; ++n)
                        sum += plat::walsh_sign(k, pts.numerator(n, j), digits);
                    ++checked_sums;
                    if (sum != 0 && sum != N) ++bad_sums;
                }
            }
        }
    }
    bool pass = bad_projections == 0 && bad_sums == 0;
    return {pass, format("digital-net-exactness: m=1..8, alpha in {2,3}: "
                         "%lld bad 1D projections, %lld/%lld character sums outside {0,N}",
                         bad_projections, bad_sums, checked_sums)};
}

Outcome check_cbc_optimality() {
    struct Config {
        int m, s, alpha;
    };
    const Config configs[] = {{2, 2, 2}, {3, 2, 2}, {3, 1, 3}};
    std::string detail;
    bool pass = true;
    for (const Config& c : configs) {
        std::vector<double> beta;
        for (int j = 1; j <= c.s; ++j) beta.push_back(1.0 / (j * j));
        cbc::SpodWeightSpec spec = make_spec(c.alpha, beta);
        cbc::CbcResult result = cbc::cbc_construct(c.m, c.s, c.alpha, spec, false);
        double constructed = cbc::construction_objective(result.rule, spec);
        double optimum = exhaustive_min(c.m, c.s, c.alpha, spec);
        // Mirror-image rules share the optimum value; evaluating them sums the
        // same terms in different orders, so equality holds to final ulps.
        bool ok = std::abs(constructed - optimum) <= 1e-12 * std::abs(optimum);
        pass = pass && ok;
        detail += format(" (%d,%d,%d): %.12g %s %.12g;", c.m, c.s, c.alpha, constructed,
                         ok ? "==" : "!=", optimum);
    }
    return {pass,
            "cbc-optimality: constructed objective vs exhaustive optimum, rel tol 1e-12:" +
                detail};
}

Outcome check_quadrature_order(int threads) {
    std::vector<double> beta;
    for (int j = 1; j <= 8; ++j) beta.push_back(1.0 / (j * j));
    cbc::SpodWeightSpec spec = make_spec(2, beta);

    auto integrand = [](std::span<const double> y) {
        double p = 1.0;
        for (int j = 1; j <= 8; ++j) {
            double v = y[static_cast<std::size_t>(j - 1)];
            p *= 1.0 + (v * v - 1.0 / 12.0) / (j * j);
        }
        return p;
    };

    std::vector<double> log_n, log_err;
    for (int m = 6; m <= 14; ++m) {
        cbc::CbcResult result = cbc::cbc_construct(m, 8, 2, spec, false, {}, threads);
        plat::PointSet pts = plat::shift_to_centered(plat::generate(result.rule));
        double q = cbc::qmc_integrate(pts, integrand);
        double err = std::abs(q - 1.0);
        if (err == 0.0) err = 1e-18;  // below representable error; keep the fit defined
        log_n.push_back(std::log(std::ldexp(1.0, m)));
        log_err.push_back(std::log(err));
    }
    double order = -util::lsq_slope(log_n, log_err);
    bool pass = order >= 1.5;
    return {pass, format("quadrature-order: alpha=2 s=8 rule, product integrand, "
                         "observed order %.3f >= 1.5 over N=2^6..2^14",
                         order)};
}

Outcome check_fem_order() {
    std::vector<double> y = {0.4, -0.3, 0.2, -0.1};
    double reference = pde::solve_G(y, 7, 4);
    std::vector<double> log_h, log_err;
    for (int level = 2; level <= 5; ++level) {
        double g = pde::solve_G(y, level, 4);
        log_h.push_back(std::log(std::ldexp(1.0, -(level + 1))));
        log_err.push_back(std::log(std::abs(g - reference)));
    }
    double order = util::lsq_slope(log_h, log_err);
    bool pass = std::abs(order - 2.0) <= 0.1;
    return {pass, format("fem-order: functional error order %.3f vs 2.0 +- 0.1 "
                         "(levels 2..5 against level 7)",
                         order)};
}

Outcome check_telescoping(int threads) {
    ml::DiskRuleCache rules("acceptance-cache", threads);
    cbc::SpodWeightSpec spec = ml::ml_weight_spec(5);
    plat::InterlacedRule rule = rules.get(4, 5, 2, spec);

    ml::LevelPlan plan;
    plan.L = 3;
    plan.mode = ml::PlanMode::paper4;
    for (int l = 0; l <= 3; ++l) {
        plan.levels.push_back({l, std::ldexp(1.0, -(l + 1)), 5, 4, 16});
    }
    ml::RuleProvider provider = [&](int m, int s) { return rules.get(m, s, 2, spec); };
    ml::PdeIntegrand integrand;
    ml::EstimateRecord multi = ml::multi_level_estimate(plan, provider, integrand, threads);
    double single = ml::rule_mean(rule, integrand, 3, 5, threads);
    double rel = std::abs(multi.estimate - single) / std::abs(single);
    bool pass = rel <= 1e-12;
    return {pass, format("telescoping: constant-plan multi-level %.17g vs finest-level "
                         "mean %.17g, rel diff %.2g <= 1e-12",
                         multi.estimate, single, rel)};
}

Outcome check_truncation_decay(int threads) {
    ml::DiskRuleCache rules("acceptance-cache", threads);
    ml::RuleProvider provider = [&](int m, int s) {
        return rules.get(m, s, 2, ml::sl_weight_spec(s));
    };
    ml::PdeIntegrand integrand;
    const int dims[] = {4, 16, 64};
    auto recs = ml::dimension_truncation_study(5, 12, dims, 256, provider, integrand, threads);
    std::vector<double> log_s, log_err;
    for (const auto& r : recs) {
        log_s.push_back(std::log(static_cast<double>(r.s)));
        log_err.push_back(std::log(r.error));
    }
    double order = -util::lsq_slope(log_s, log_err);
    bool pass = order >= 1.5;
    return {pass, format("truncation-decay: errors %.3g/%.3g/%.3g at s=4/16/64, "
                         "observed order %.3f >= 1.5 (level 5, 2^12 points, "
                         "reference s=256)",
                         recs[0].error, recs[1].error, recs[2].error, order)};
}

Outcome check_criterion_oracle() {
    std::uint64_t seed = 424242;
    double worst = 0.0;
    int checked = 0;
    for (int alpha : {2, 3}) {
        for (int s = 1; s <= 3; ++s) {
            for (int m = 1; m <= 4; ++m) {
                std::vector<double> beta1, beta2;
                for (int j = 1; j <= s; ++j) {
                    beta1.push_back(1.0 / (j * j));
                    beta2.push_back(0.6 / std::pow(j, 1.5));
                }
                for (const cbc::SpodWeightSpec& spec :
                     {make_spec(alpha, beta1), make_spec(alpha, beta2, 0.7)}) {
                    std::vector<std::uint64_t> ones(
                        static_cast<std::size_t>(alpha * s), 1);
                    std::vector<std::uint64_t> random;
                    for (int i = 0; i < alpha * s; ++i)
                        random.push_back(lcg(seed) % ((1u << m) - 1) + 1);
                    for (const auto& gens : {ones, random}) {
                        plat::InterlacedRule rule = make_rule(m, s, alpha, gens);
                        double lib = cbc::criterion(rule, spec);
                        double oracle = criterion_oracle(rule, spec);
                        worst = std::max(worst, std::abs(lib - oracle) / std::abs(oracle));
                        ++checked;
                    }
                }
            }
        }
    }
    bool pass = worst <= 1e-12;
    return {pass, format("criterion-oracle: %d configurations (alpha in {2,3}, s<=3, m<=4), "
                         "worst rel diff %.2g <= 1e-12",
                         checked, worst)};
}

} // namespace

int main() {
    const int threads = util::default_thread_count();
    std::vector<Outcome> outcomes(10);
    struct Job {
        int index;  // criterion number - 1
        std::function<Outcome()> run;
    };
    // Cheap checks first so quick failures surface early; output order is by
    // criterion number regardless.
    const std::vector<Job> jobs = {
        {1, [] { return check_cost_exponents(); }},
        {2, [] { return check_constant_evaluators(); }},
        {3, [] { return check_digital_net_exactness(); }},
        {9, [] { return check_criterion_oracle(); }},
        {4, [] { return check_cbc_optimality(); }},
        {6, [] { return check_fem_order(); }},
        {7, [&] { return check_telescoping(threads); }},
        {5, [&] { return check_quadrature_order(threads); }},
        {8, [&] { return check_truncation_decay(threads); }},
        {0, [&] { return check_convergence_slopes(threads); }},
    };
    for (const Job& job : jobs) {
        auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = job.run();
        } catch (const std::exception& e) {
            outcome = {false, format("criterion %d raised: %s", job.index + 1, e.what())};
        }
        double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::fprintf(stderr, "  [%d/10] done in %.1fs\n", job.index + 1, seconds);
        outcomes[static_cast<std::size_t>(job.index)] = outcome;
    }

    int failures = 0;
    for (int i = 0; i < 10; ++i) {
        const Outcome& o = outcomes[static_cast<std::size_t>(i)];
        if (!o.pass) ++failures;
        std::printf("[%s] %2d %s\n", o.pass ? "PASS" : "FAIL", i + 1, o.text.c_str());
    }
    std::printf("%d/10 acceptance criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
