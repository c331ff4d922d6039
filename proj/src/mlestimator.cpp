#include "hoqmc/mlestimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>

#include "hoqmc/errors.hpp"
#include "hoqmc/pdemodel.hpp"
#include "hoqmc/util.hpp"

namespace hoqmc::ml {

namespace {

constexpr double kCeilGuard = 1e-9;  // absorbs rounding in exact dyadic exponents

int ceil_exponent(double log2_value, int m_cap) {
    double m = std::ceil(log2_value - kCeilGuard);
    int mi = m < 1.0 ? 1 : static_cast<int>(m);
    return std::min(mi, m_cap);
}

long long ceil_pow2(double exponent) {
    double raw = std::exp2(exponent);
    if (!(raw < 9.0e18)) throw Error(ErrorKind::validation, "planned dimension overflows");
    return static_cast<long long>(std::ceil(raw - kCeilGuard));
}

std::string rule_identifier(const plat::InterlacedRule& rule) {
    std::uint64_t gen_hash = util::fnv1a64(rule.generators.data(),
                                           rule.generators.size() * sizeof(rule.generators[0]));
    char buf[128];
    std::snprintf(buf, sizeof buf, "m=%d s=%d alpha=%d modulus=%llu gen=%016llx", rule.m, rule.s,
                  rule.alpha, static_cast<unsigned long long>(rule.modulus.bits),
                  static_cast<unsigned long long>(gen_hash));
    return buf;
}

// Mean of the level integrand (optionally a backward difference against the
// previous level) over all points of `rule`, shifted to [-1/2, 1/2)^s.
double level_mean(const plat::InterlacedRule& rule, const LevelIntegrand& integrand, int level,
                  int s_fine, bool with_coarse, int coarse_level, int s_coarse, int threads) {
    plat::PointGenerator gen(rule);
    std::size_t count = static_cast<std::size_t>(gen.rows());
    std::vector<double> values(count);
    util::parallel_for(count, threads, [&](std::size_t n) {
        std::vector<double> y(static_cast<std::size_t>(s_fine));
        gen.centered_row(n, y);
        double v = integrand.evaluate(y, level, s_fine);
        if (with_coarse) {
            v -= integrand.evaluate(std::span<const double>(y).first(s_coarse), coarse_level,
                                    s_coarse);
        }
        values[n] = v;
    });
    return util::pairwise_mean(values);
}

plat::InterlacedRule fetch_rule(const RuleProvider& rules, int m, int s) {
    plat::InterlacedRule rule = rules(m, s);
    if (rule.m != m || rule.s != s) {
        throw Error(ErrorKind::validation, "rule provider returned a mismatched rule");
    }
    return rule;
}

} // namespace

LevelPlan plan_levels(int L, const bounds::ProblemExponents& exponents, PlanMode mode,
                      int m_cap) {
    if (L < 0 || L > 40) throw Error(ErrorKind::validation, "finest level must be in [0, 40]");
    if (m_cap < 1) throw Error(ErrorKind::validation, "m_cap must be >= 1");
    LevelPlan plan;
    plan.L = L;
    plan.mode = mode;
    plan.m_cap = m_cap;
    plan.exponents = exponents;
    plan.levels.resize(static_cast<std::size_t>(L) + 1);

    if (mode == PlanMode::paper4) {
        for (int l = 0; l <= L; ++l) {
            LevelSpec& spec = plan.levels[l];
            spec.level = l;
            spec.h = std::ldexp(1.0, -(l + 1));
            spec.s = 1ll << std::min(4 * l, std::min(L, 62));
            double log2_n = l == 0 ? 2.0 * L : 0.4 * (2.0 * (L - 2 * l) - std::log2(spec.s));
            spec.m = ceil_exponent(log2_n, m_cap);
            spec.N = 1ll << spec.m;
        }
        return plan;
    }

    double pt, tau, kappa;
    try {
        exponents.validate();
        pt = exponents.p_t();
        tau = exponents.tau();
        kappa = exponents.kappa();
    } catch (const Error& err) {
        throw InvalidExponents(err.what());
    }
    double d = exponents.d;
    double t = exponents.t;
    long long s_cap = ceil_pow2(L * tau * kappa);
    for (int l = 0; l <= L; ++l) {
        LevelSpec& spec = plan.levels[l];
        spec.level = l;
        spec.h = std::ldexp(1.0, -(l + 1));
        if (l == 0) {
            spec.s = std::min(1ll, s_cap);
        } else if (t <= 0.0) {
            spec.s = s_cap;
        } else {
            spec.s = std::min(ceil_pow2(l * tau * d / t), s_cap);
        }
    }

    // Cost-balanced N_0 exponent: five cases on (d/tau vs p_t - d/t, p_t);
    // equality cases carry an extra L^{p_t} factor.
    double d_over_t = t > 0.0 ? d / t : std::numeric_limits<double>::infinity();
    double d_over_tau = d / tau;
    double min_dk = std::min(d_over_t, kappa);
    double log2_n0;
    if (d_over_tau < pt - d_over_t) {
        log2_n0 = L * tau * pt;
    } else if (d_over_tau == pt - d_over_t) {
        log2_n0 = L * tau * pt + pt * std::log2(static_cast<double>(L));
    } else if (d_over_tau < pt) {
        double bracket = pt + 1.0 + min_dk * (t / tau - t * pt / d + 1.0);
        log2_n0 = L * tau * bracket * pt / (pt + 1.0);
    } else if (d_over_tau == pt) {
        double bracket = pt + 1.0 + min_dk;
        log2_n0 = L * tau * bracket * pt / (pt + 1.0) + pt * std::log2(static_cast<double>(L));
    } else {
        double bracket = 1.0 + d_over_tau + min_dk;
        log2_n0 = L * tau * bracket * pt / (pt + 1.0);
    }
    if (!std::isfinite(log2_n0)) log2_n0 = 0.0;  // L = 0 equality cases

    double log2_s0 = std::log2(static_cast<double>(plan.levels[0].s));
    for (int l = 0; l <= L; ++l) {
        LevelSpec& spec = plan.levels[l];
        double log2_n = log2_n0;
        if (l > 0) {
            double ratio = -(tau + d) * l + log2_s0 - std::log2(static_cast<double>(spec.s));
            log2_n += ratio * pt / (pt + 1.0);
        }
        spec.m = ceil_exponent(log2_n, m_cap);
        spec.N = 1ll << spec.m;
    }
    return plan;
}

double PdeIntegrand::evaluate(std::span<const double> y, int level, int s) const {
    return pde::solve_G(y, level, s);
}

cbc::SpodWeightSpec sl_weight_spec(int s, double walsh_constant) {
    cbc::SpodWeightSpec spec;
    spec.alpha = 2;
    spec.beta = pde::sl_beta(s);
    spec.walsh_constant = walsh_constant;
    spec.order_factor = cbc::OrderFactor::shifted_factorial;
    return spec;
}

cbc::SpodWeightSpec ml_weight_spec(int s, double walsh_constant) {
    cbc::SpodWeightSpec spec;
    spec.alpha = 2;
    spec.beta = pde::ml_beta(s);
    spec.walsh_constant = walsh_constant;
    spec.order_factor = cbc::OrderFactor::shifted_factorial;
    return spec;
}

struct DiskRuleCache::Impl {
    std::mutex mutex;
    std::map<std::string, plat::InterlacedRule> memo;
};

DiskRuleCache::DiskRuleCache(std::string directory, int threads, cbc::ScanPath path)
    : directory_(std::move(directory)),
      threads_(threads),
      path_(path),
      impl_(std::make_shared<Impl>()) {}

plat::InterlacedRule DiskRuleCache::get(int m, int s, int alpha,
                                        const cbc::SpodWeightSpec& spec) {
    // The "c2" token names the construction generation (depth-weighted
    // objective); bumping it orphans cache files built by older objectives.
    char name[96];
    std::snprintf(name, sizeof name, "rule-c2-m%d-s%d-a%d-w%016llx.txt", m, s, alpha,
                  static_cast<unsigned long long>(spec.fingerprint()));
    std::lock_guard<std::mutex> lock(impl_->mutex);
    auto memo_it = impl_->memo.find(name);
    if (memo_it != impl_->memo.end()) return memo_it->second;

    std::filesystem::path file;
    if (!directory_.empty()) {
        file = std::filesystem::path(directory_) / name;
        if (std::filesystem::exists(file)) {
            plat::InterlacedRule rule;
            try {
                rule = plat::read_rule_file(file.string());
                plat::validate(rule);
            } catch (const std::exception& e) {
                throw CacheCorrupt("rule cache file " + file.string() + ": " + e.what());
            }
            if (rule.m != m || rule.s != s || rule.alpha != alpha) {
                throw CacheCorrupt("rule cache file does not match its key: " + file.string());
            }
            impl_->memo.emplace(name, rule);
            return rule;
        }
    }

    // Distinct generators whenever the candidate pool allows it: repeated
    // generators duplicate digit streams and destroy the rule's convergence
    // order even when the construction criterion is low.
    bool prune = static_cast<long long>(alpha) * s <= (1LL << m) - 1;
    cbc::CbcResult result = cbc::cbc_construct(m, s, alpha, spec, prune, {}, threads_,
                                               path_);
    if (!directory_.empty()) {
        std::filesystem::create_directories(directory_);
        plat::write_rule_file(file.string(), result.rule);
    }
    impl_->memo.emplace(name, result.rule);
    return result.rule;
}

double rule_mean(const plat::InterlacedRule& rule, const LevelIntegrand& integrand, int level,
                 int s, int threads) {
    if (s < 1 || s > rule.s) {
        throw Error(ErrorKind::validation, "truncation dimension exceeds rule dimension");
    }
    return level_mean(rule, integrand, level, s, false, 0, 0, threads);
}

EstimateRecord single_level_estimate(int L, const RuleProvider& rules,
                                     const LevelIntegrand& integrand, int threads) {
    if (L < 0 || L > 19) throw Error(ErrorKind::validation, "single-level L must be in [0, 19]");
    int m = L + 1;
    int s = 1 << (L + 1);
    plat::InterlacedRule rule = fetch_rule(rules, m, s);
    double mean = level_mean(rule, integrand, L, s, false, 0, 0, threads);
    double h = std::ldexp(1.0, -(L + 1));
    double work = static_cast<double>(1ll << m) * s / (h * h);

    EstimateRecord record;
    record.estimate = mean;
    record.work = work;
    record.levels.push_back({L, s, m, 1ll << m, mean, work});
    record.rule_ids.push_back(rule_identifier(rule));
    return record;
}

EstimateRecord multi_level_estimate(const LevelPlan& plan, const RuleProvider& rules,
                                    const LevelIntegrand& integrand, int threads) {
    if (plan.levels.empty() || static_cast<int>(plan.levels.size()) != plan.L + 1) {
        throw Error(ErrorKind::validation, "plan does not cover levels 0..L");
    }
    EstimateRecord record;
    std::vector<double> means;
    for (int l = 0; l <= plan.L; ++l) {
        const LevelSpec& spec = plan.levels[l];
        if (spec.s < 1 || spec.m < 1 || spec.N != (1ll << spec.m) || !(spec.h > 0.0)) {
            throw Error(ErrorKind::validation, "malformed level plan entry");
        }
        if (l > 0 && plan.levels[l - 1].s > spec.s) {
            throw Error(ErrorKind::validation, "plan dimensions must be non-decreasing");
        }
        plat::InterlacedRule rule = fetch_rule(rules, spec.m, static_cast<int>(spec.s));
        bool with_coarse = l > 0;
        int coarse_level = with_coarse ? plan.levels[l - 1].level : 0;
        int s_coarse = with_coarse ? static_cast<int>(plan.levels[l - 1].s) : 0;
        double mean = level_mean(rule, integrand, spec.level, static_cast<int>(spec.s),
                                 with_coarse, coarse_level, s_coarse, threads);
        double work = static_cast<double>(spec.N) * static_cast<double>(spec.s) /
                      (spec.h * spec.h);
        means.push_back(mean);
        record.levels.push_back({spec.level, spec.s, spec.m, spec.N, mean, work});
        record.rule_ids.push_back(rule_identifier(rule));
        record.work += work;
    }
    record.estimate = util::pairwise_sum(means);
    return record;
}

std::vector<TruncationRecord> dimension_truncation_study(
    int level, int m, std::span<const int> s_values, int s_reference,
    const RuleProvider& rules, const LevelIntegrand& integrand, int threads) {
    if (s_reference < 1) throw Error(ErrorKind::validation, "reference dimension must be >= 1");
    auto estimate_at = [&](int s) {
        plat::InterlacedRule rule = fetch_rule(rules, m, s);
        return level_mean(rule, integrand, level, s, false, 0, 0, threads);
    };
    double reference = estimate_at(s_reference);
    std::vector<TruncationRecord> records;
    records.reserve(s_values.size());
    for (int s : s_values) {
        if (s < 1) throw Error(ErrorKind::validation, "truncation dimension must be >= 1");
        double est = estimate_at(s);
        records.push_back({s, est, std::abs(est - reference)});
    }
    return records;
}

} // namespace hoqmc::ml
