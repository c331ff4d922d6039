#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hoqmc/bounds.hpp"
#include "hoqmc/mlestimator.hpp"

namespace hoqmc::harness {

// Flat key=value study configuration. Reference fields left at -1 are filled
// by finalize(): level = L_max + 1, s = twice the finest single-level
// dimension, m = (largest study m) + 2 capped at m_cap — placing the
// reference error well below the finest study error.
struct StudyConfig {
    int L_max = 5;
    int reference_level = -1;
    int reference_s = -1;
    int reference_m = -1;
    int m_cap = 20;
    double walsh_constant = 1.0;
    int threads = 1;
    ml::PlanMode mode = ml::PlanMode::paper4;
    bounds::ProblemExponents exponents;  // used by general-mode plans
    std::string out_dir;
    std::string cache_dir;

    void validate() const;
};

// Parse key=value text ('#' comments). Unknown keys are rejected.
StudyConfig parse_config(const std::string& text);
StudyConfig load_config_file(const std::string& path);

// Fill derived defaults and check invariants.
void finalize(StudyConfig& config);

struct ConvergenceRecord {
    std::string algorithm;  // "SL" or "ML"
    int L = 0;
    double estimate = 0.0;
    double abs_error = 0.0;
    double work = 0.0;
};

// Single-level estimate at the reference parameters, persisted to a JSON
// cache file (with provenance) under cache_dir and reused verbatim on the
// next identical request. Raises CacheCorrupt on unreadable cache content.
double compute_reference(const StudyConfig& config, ml::DiskRuleCache& rules,
                         const ml::LevelIntegrand& integrand);

// For L = 1..L_max run both estimators against the cached reference; rows
// sorted by (algorithm, L). When out_dir is set, also writes study.csv there.
std::vector<ConvergenceRecord> run_study(const StudyConfig& config, ml::DiskRuleCache& rules,
                                         const ml::LevelIntegrand& integrand);

// Least-squares slope of log(abs_error) vs log(work) over the last
// min(last_k, count) records. DegenerateFit on fewer than two usable points,
// equal work values, or nonpositive errors.
double fit_slope(std::span<const ConvergenceRecord> records, int last_k = 5);

// CSV schema: header `algorithm,L,estimate,abs_error,work`, one row per
// record, 17-significant-digit decimals (round-trip exact).
void write_csv(std::ostream& out, std::span<const ConvergenceRecord> records);
std::vector<ConvergenceRecord> read_csv(std::istream& in);
void write_csv_file(const std::string& path, std::span<const ConvergenceRecord> records);
std::vector<ConvergenceRecord> read_csv_file(const std::string& path);

} // namespace hoqmc::harness
