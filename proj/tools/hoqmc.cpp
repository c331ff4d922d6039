// Command-line front end for the multi-level higher-order QMC toolkit.
//
// Subcommands: generate-rule, points, cbc, bounds, solve, run-sl, run-ml,
// study, fit, reference. Exit codes: 0 success, 2 validation error,
// 3 numerical failure.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

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

using hoqmc::Error;
using hoqmc::ErrorKind;
using nlohmann::json;

// All comma/whitespace-separated numbers in a text file, in order.
std::vector<double> read_numbers(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::validation, "cannot read file: " + path);
    std::vector<double> values;
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        try {
            std::size_t used = 0;
            values.push_back(std::stod(token, &used));
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw Error(ErrorKind::validation, "not a number in " + path + ": " + token);
        }
        token.clear();
    };
    char c;
    while (in.get(c)) {
        if (c == ',' || c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            flush();
        } else {
            token += c;
        }
    }
    flush();
    return values;
}

// Weight spec from a named coefficient-model family ("sl" or "ml") or a file
// of explicit beta values (first s entries used).
hoqmc::cbc::SpodWeightSpec weights_from_source(const std::string& source, int s,
                                               double walsh_constant) {
    if (source == "sl") return hoqmc::ml::sl_weight_spec(s, walsh_constant);
    if (source == "ml") return hoqmc::ml::ml_weight_spec(s, walsh_constant);
    std::vector<double> beta = read_numbers(source);
    if (static_cast<int>(beta.size()) < s) {
        throw Error(ErrorKind::validation,
                    "beta file " + source + " holds fewer than s values");
    }
    beta.resize(static_cast<std::size_t>(s));
    hoqmc::cbc::SpodWeightSpec spec;
    spec.alpha = 2;
    spec.beta = std::move(beta);
    spec.walsh_constant = walsh_constant;
    spec.validate();
    return spec;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::validation, "cannot write file: " + path);
    out << text;
}

json record_to_json(const hoqmc::ml::EstimateRecord& record) {
    json doc;
    doc["estimate"] = record.estimate;
    doc["work"] = record.work;
    doc["levels"] = json::array();
    for (const auto& level : record.levels) {
        doc["levels"].push_back({{"level", level.level},
                                 {"s", level.s},
                                 {"m", level.m},
                                 {"N", level.N},
                                 {"mean", level.mean},
                                 {"work", level.work}});
    }
    doc["rule_ids"] = record.rule_ids;
    return doc;
}

void emit_record(const hoqmc::ml::EstimateRecord& record, const std::string& out_path) {
    std::string text = record_to_json(record).dump(2) + "\n";
    if (out_path.empty()) {
        std::cout << text;
    } else {
        write_text(out_path, text);
        std::cout << hoqmc::util::g17(record.estimate) << "\n";
    }
}

hoqmc::harness::StudyConfig load_config_with_overrides(
    const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::validation, "cannot read config file: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    for (const std::string& line : overrides) text << "\n" << line;
    return hoqmc::harness::parse_config(text.str());
}

int run(int argc, char** argv) {
    CLI::App app{"Multi-level higher-order QMC estimation of an elliptic PDE functional"};
    app.require_subcommand(1);

    // ---- generate-rule ------------------------------------------------
    auto* gen = app.add_subcommand(
        "generate-rule", "Assemble, validate, and emit a rule file from explicit generators");
    int gen_m = 4, gen_s = 1, gen_alpha = 2;
    std::string gen_modulus, gen_out;
    std::vector<std::string> gen_list;
    gen->add_option("--m", gen_m, "log2 of the point count")->required();
    gen->add_option("--s", gen_s, "number of dimensions")->required();
    gen->add_option("--alpha", gen_alpha, "interlacing factor");
    gen->add_option("--gen", gen_list,
                    "alpha*s generator encodings (decimal), comma separated or repeated")
        ->required()
        ->delimiter(',');
    gen->add_option("--modulus", gen_modulus,
                    "decimal modulus encoding (default: smallest irreducible of degree m)");
    gen->add_option("--out", gen_out, "rule file path (default: stdout)");
    gen->callback([&] {
        hoqmc::plat::InterlacedRule rule;
        rule.m = gen_m;
        rule.s = gen_s;
        rule.alpha = gen_alpha;
        rule.modulus = gen_modulus.empty() ? hoqmc::gf2::smallest_irreducible(gen_m)
                                           : hoqmc::gf2::parse_poly(gen_modulus);
        for (const std::string& g : gen_list) {
            rule.generators.push_back(hoqmc::gf2::parse_poly(g));
        }
        hoqmc::plat::validate(rule);
        if (gen_out.empty()) {
            hoqmc::plat::write_rule(std::cout, rule);
        } else {
            hoqmc::plat::write_rule_file(gen_out, rule);
        }
    });

    // ---- points --------------------------------------------------------
    auto* points = app.add_subcommand("points", "Emit the points of a rule file as CSV");
    std::string points_rule, points_out;
    bool points_centered = false;
    points->add_option("--rule", points_rule, "rule file path")->required();
    points->add_flag("--centered", points_centered, "shift coordinates to [-1/2, 1/2)");
    points->add_option("--out", points_out, "CSV path (default: stdout)");
    points->callback([&] {
        hoqmc::plat::InterlacedRule rule = hoqmc::plat::read_rule_file(points_rule);
        hoqmc::plat::PointSet pts = hoqmc::plat::generate(rule);
        if (points_centered) pts = hoqmc::plat::shift_to_centered(pts);
        if (points_out.empty()) {
            hoqmc::plat::write_points_csv(std::cout, pts);
        } else {
            std::ofstream out(points_out);
            if (!out) throw Error(ErrorKind::validation, "cannot write file: " + points_out);
            hoqmc::plat::write_points_csv(out, pts);
        }
    });

    // ---- cbc -----------------------------------------------------------
    auto* cbc = app.add_subcommand(
        "cbc", "Construct a rule by component-by-component criterion minimization");
    int cbc_m = 4, cbc_s = 1, cbc_alpha = 2, cbc_threads = 1;
    double cbc_walsh = 1.0;
    bool cbc_prune = true;
    std::string cbc_beta = "sl", cbc_modulus, cbc_out, cbc_sidecar;
    cbc->add_option("--m", cbc_m, "log2 of the point count")->required();
    cbc->add_option("--s", cbc_s, "number of dimensions")->required();
    cbc->add_option("--alpha", cbc_alpha, "interlacing factor");
    cbc->add_option("--beta-source", cbc_beta,
                    "coordinate weights: sl, ml, or a file of beta values");
    cbc->add_option("--walsh-constant", cbc_walsh, "kernel scale factor");
    cbc->add_flag("--prune,!--no-prune", cbc_prune,
                  "forbid repeated generator encodings (default: on)");
    cbc->add_option("--modulus", cbc_modulus, "decimal modulus encoding override");
    cbc->add_option("--out", cbc_out, "rule file path (default: stdout)");
    cbc->add_option("--sidecar", cbc_sidecar,
                    "criterion-history JSON path (default: <out>.json)");
    cbc->add_option("--threads", cbc_threads, "worker threads")->check(CLI::PositiveNumber);
    cbc->callback([&] {
        hoqmc::cbc::SpodWeightSpec spec = weights_from_source(cbc_beta, cbc_s, cbc_walsh);
        spec.alpha = cbc_alpha;
        hoqmc::gf2::BitPolynomial modulus{};
        if (!cbc_modulus.empty()) modulus = hoqmc::gf2::parse_poly(cbc_modulus);
        hoqmc::cbc::CbcResult result = hoqmc::cbc::cbc_construct(
            cbc_m, cbc_s, cbc_alpha, spec, cbc_prune, modulus, cbc_threads);
        if (cbc_out.empty()) {
            hoqmc::plat::write_rule(std::cout, result.rule);
        } else {
            hoqmc::plat::write_rule_file(cbc_out, result.rule);
        }
        json side;
        side["m"] = cbc_m;
        side["s"] = cbc_s;
        side["alpha"] = cbc_alpha;
        side["modulus"] = hoqmc::gf2::to_decimal(result.rule.modulus);
        side["walsh_constant"] = cbc_walsh;
        side["prune"] = cbc_prune;
        side["pruned"] = result.pruned;
        side["criterion_history"] = result.criterion_history;
        if (!result.criterion_history.empty()) {
            side["criterion"] = result.criterion_history.back();
        }
        std::string sidecar = cbc_sidecar;
        if (sidecar.empty() && !cbc_out.empty()) sidecar = cbc_out + ".json";
        if (!sidecar.empty()) write_text(sidecar, side.dump(2) + "\n");
    });

    // ---- bounds ----------------------------------------------------------
    auto* bnd = app.add_subcommand(
        "bounds", "Evaluate the closed-form error/cost bounds as a JSON document");
    double b_p0 = 0.5, b_t = 1.0, b_tp = 1.0, b_d = 2.0, b_lambda = 1.0, b_walsh = 1.0;
    double b_tol = 1e-12;
    int b_alpha = 2, b_base = 2, b_s = 16, b_L = -1;
    std::string b_beta = "sl", b_mode = "paper4";
    bnd->add_option("--p0", b_p0, "summability exponent");
    bnd->add_option("--t", b_t, "solution smoothness order");
    bnd->add_option("--t-prime", b_tp, "functional smoothness order");
    bnd->add_option("--d", b_d, "spatial dimension");
    bnd->add_option("--alpha", b_alpha, "interlacing factor");
    bnd->add_option("--b", b_base, "digit base (prime)");
    bnd->add_option("--lambda", b_lambda, "quality-sum power in (1/alpha, 1]");
    bnd->add_option("--s", b_s, "truncation dimension for weight-dependent bounds");
    bnd->add_option("--beta-source", b_beta,
                    "coordinate weights: sl, ml, or a file of beta values");
    bnd->add_option("--walsh-constant", b_walsh, "kernel scale factor");
    bnd->add_option("--tol", b_tol, "relative tail tolerance of the majorant series");
    bnd->add_option("--L", b_L, "when set, include the level plan and its theta flags");
    bnd->add_option("--mode", b_mode, "plan mode for --L: paper4 or general")
        ->check(CLI::IsMember({"paper4", "general"}));
    bnd->callback([&] {
        hoqmc::bounds::ProblemExponents e{b_p0, b_t, b_tp, b_d};
        e.validate();
        hoqmc::cbc::SpodWeightSpec spec = weights_from_source(b_beta, b_s, b_walsh);
        spec.alpha = b_alpha;

        json doc;
        doc["exponents"] = {{"p0", e.p0},     {"t", e.t},       {"t_prime", e.t_prime},
                            {"d", e.d},       {"tau", e.tau()}, {"kappa", e.kappa()},
                            {"p_t", e.p_t()}};
        doc["walsh_factor_C"] = hoqmc::bounds::walsh_factor_C(b_alpha, b_base);
        doc["rho"] = hoqmc::bounds::rho(b_alpha, b_base, b_lambda);
        hoqmc::bounds::DGammaResult dg = hoqmc::bounds::d_gamma(b_lambda, spec, b_tol);
        doc["d_gamma"] = {{"divergent", dg.divergent},
                          {"log_value", dg.log_value},
                          {"value", std::isfinite(dg.value) ? json(dg.value) : json("inf")}};
        std::vector<double> beta0;
        for (int j = 1; j <= std::max(4 * b_s, 256); ++j) {
            beta0.push_back(hoqmc::pde::lambda_of(j));
        }
        hoqmc::bounds::TruncationTail tail = hoqmc::bounds::truncation_tail(b_s, b_p0, beta0);
        doc["truncation_tail"] = {{"bound", tail.bound}, {"exact_partial", tail.exact_partial}};
        hoqmc::bounds::CostExponents cost = hoqmc::bounds::cost_exponents(e);
        doc["cost"] = {{"a_sl", cost.a_sl},
                       {"a_ml", cost.a_ml},
                       {"regime", hoqmc::bounds::regime_name(cost.regime)},
                       {"log_factor", cost.log_factor},
                       {"ml_wins", cost.ml_wins}};
        if (b_L >= 0) {
            auto mode = b_mode == "general" ? hoqmc::ml::PlanMode::general
                                            : hoqmc::ml::PlanMode::paper4;
            hoqmc::ml::LevelPlan plan = hoqmc::ml::plan_levels(b_L, e, mode);
            json levels = json::array();
            std::vector<long long> s_levels;
            for (const auto& lv : plan.levels) {
                levels.push_back({{"level", lv.level},
                                  {"h", lv.h},
                                  {"s", lv.s},
                                  {"m", lv.m},
                                  {"N", lv.N}});
                s_levels.push_back(lv.s);
            }
            doc["plan"] = levels;
            doc["theta"] = hoqmc::bounds::theta_flags(s_levels);
        }
        std::cout << doc.dump(2) << "\n";
    });

    // ---- solve -----------------------------------------------------------
    auto* solve = app.add_subcommand(
        "solve", "Evaluate the PDE functional at one parameter vector");
    int solve_level = 0, solve_s = 0;
    std::string solve_y;
    solve->add_option("--level", solve_level, "mesh refinement level")->required();
    solve->add_option("--s", solve_s, "truncation dimension")->required();
    solve->add_option("--y-file", solve_y, "CSV of parameter coordinates")->required();
    solve->callback([&] {
        std::vector<double> y = read_numbers(solve_y);
        if (static_cast<int>(y.size()) < solve_s) {
            throw Error(ErrorKind::validation, "y file holds fewer than s coordinates");
        }
        double g = hoqmc::pde::solve_G(y, solve_level, solve_s);
        std::cout << hoqmc::util::g17(g) << "\n";
    });

    // ---- run-sl / run-ml ---------------------------------------------------
    int run_L = 3, run_mcap = 20, run_threads = 1;
    double run_walsh = 1.0;
    double run_p0 = 0.5, run_t = 1.0, run_tp = 1.0, run_d = 2.0;
    std::string run_mode = "paper4", run_rules, run_out;
    auto add_run_flags = [&](CLI::App* cmd, bool wants_mode) {
        cmd->add_option("--L", run_L, "finest mesh level")->required();
        if (wants_mode) {
            cmd->add_option("--mode", run_mode, "level plan mode: paper4 or general")
                ->check(CLI::IsMember({"paper4", "general"}));
            cmd->add_option("--p0", run_p0, "summability exponent (general mode)");
            cmd->add_option("--t", run_t, "solution smoothness order (general mode)");
            cmd->add_option("--t-prime", run_tp, "functional smoothness order (general mode)");
            cmd->add_option("--d", run_d, "spatial dimension (general mode)");
            cmd->add_option("--m-cap", run_mcap, "upper bound on any rule exponent");
        }
        cmd->add_option("--rules-dir", run_rules, "rule cache directory (default: in-memory)");
        cmd->add_option("--out", run_out, "JSON output path (default: stdout)");
        cmd->add_option("--walsh-constant", run_walsh, "kernel scale factor");
        cmd->add_option("--threads", run_threads, "worker threads")
            ->check(CLI::PositiveNumber);
    };

    auto* run_sl = app.add_subcommand("run-sl", "Single-level estimate at level L");
    add_run_flags(run_sl, false);
    run_sl->callback([&] {
        hoqmc::ml::DiskRuleCache cache(run_rules, run_threads);
        hoqmc::ml::PdeIntegrand integrand;
        hoqmc::ml::RuleProvider rules = [&](int m, int s) {
            return cache.get(m, s, 2, hoqmc::ml::sl_weight_spec(s, run_walsh));
        };
        emit_record(hoqmc::ml::single_level_estimate(run_L, rules, integrand, run_threads),
                    run_out);
    });

    auto* run_ml = app.add_subcommand("run-ml", "Multi-level estimate at finest level L");
    add_run_flags(run_ml, true);
    run_ml->callback([&] {
        hoqmc::ml::DiskRuleCache cache(run_rules, run_threads);
        hoqmc::ml::PdeIntegrand integrand;
        hoqmc::ml::RuleProvider rules = [&](int m, int s) {
            return cache.get(m, s, 2, hoqmc::ml::ml_weight_spec(s, run_walsh));
        };
        hoqmc::bounds::ProblemExponents e{run_p0, run_t, run_tp, run_d};
        auto mode = run_mode == "general" ? hoqmc::ml::PlanMode::general
                                          : hoqmc::ml::PlanMode::paper4;
        hoqmc::ml::LevelPlan plan = hoqmc::ml::plan_levels(run_L, e, mode, run_mcap);
        emit_record(hoqmc::ml::multi_level_estimate(plan, rules, integrand, run_threads),
                    run_out);
    });

    // ---- study / reference --------------------------------------------------
    std::string study_config, study_out;
    std::vector<std::string> study_set;
    auto* study = app.add_subcommand(
        "study", "Run the error-versus-work convergence study from a config file");
    study->add_option("--config", study_config, "key=value config file")->required();
    study->add_option("--out", study_out, "output directory for study.csv");
    study->add_option("--set", study_set, "config override, key=value (repeatable)");
    study->callback([&] {
        hoqmc::harness::StudyConfig cfg = load_config_with_overrides(study_config, study_set);
        if (!study_out.empty()) cfg.out_dir = study_out;
        hoqmc::ml::DiskRuleCache cache(cfg.cache_dir, cfg.threads);
        hoqmc::ml::PdeIntegrand integrand;
        auto records = hoqmc::harness::run_study(cfg, cache, integrand);
        hoqmc::harness::write_csv(std::cout, records);
    });

    std::string ref_config;
    std::vector<std::string> ref_set;
    auto* reference = app.add_subcommand(
        "reference", "Compute (or fetch the cached) reference functional value");
    reference->add_option("--config", ref_config, "key=value config file")->required();
    reference->add_option("--set", ref_set, "config override, key=value (repeatable)");
    reference->callback([&] {
        hoqmc::harness::StudyConfig cfg = load_config_with_overrides(ref_config, ref_set);
        hoqmc::ml::DiskRuleCache cache(cfg.cache_dir, cfg.threads);
        hoqmc::ml::PdeIntegrand integrand;
        std::cout << hoqmc::util::g17(hoqmc::harness::compute_reference(cfg, cache, integrand))
                  << "\n";
    });

    // ---- fit ------------------------------------------------------------------
    std::string fit_csv;
    int fit_last = 5;
    auto* fit = app.add_subcommand("fit", "Fit error-versus-work slopes from a study CSV");
    fit->add_option("--csv", fit_csv, "study CSV path")->required();
    fit->add_option("--last", fit_last, "number of trailing records per algorithm")
        ->check(CLI::PositiveNumber);
    fit->callback([&] {
        auto records = hoqmc::harness::read_csv_file(fit_csv);
        std::vector<std::string> algorithms;
        for (const auto& r : records) {
            if (std::find(algorithms.begin(), algorithms.end(), r.algorithm) ==
                algorithms.end()) {
                algorithms.push_back(r.algorithm);
            }
        }
        if (algorithms.empty()) {
            throw hoqmc::DegenerateFit("no records in " + fit_csv);
        }
        std::sort(algorithms.begin(), algorithms.end());
        json doc;
        for (const std::string& algorithm : algorithms) {
            std::vector<hoqmc::harness::ConvergenceRecord> group;
            for (const auto& r : records) {
                if (r.algorithm == algorithm) group.push_back(r);
            }
            doc[algorithm] = hoqmc::harness::fit_slope(group, fit_last);
        }
        std::cout << doc.dump(2) << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::validation ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
