#include "hoqmc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hoqmc/errors.hpp"
#include "hoqmc/util.hpp"

namespace hoqmc::harness {

namespace {

// Largest rule exponent any study run will request: the single-level m at
// L_max or the finest multi-level plan entry.
int max_study_m(const StudyConfig& config) {
    int m = config.L_max + 1;
    ml::LevelPlan plan =
        ml::plan_levels(config.L_max, config.exponents, config.mode, config.m_cap);
    for (const ml::LevelSpec& spec : plan.levels) m = std::max(m, spec.m);
    return m;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::validation, "invalid numeric value for " + key + ": " + value);
    }
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::validation, "invalid integer value for " + key + ": " + value);
    }
}

std::uint64_t reference_key(const StudyConfig& config) {
    std::string tag = "reference|level=" + std::to_string(config.reference_level) +
                      "|s=" + std::to_string(config.reference_s) +
                      "|m=" + std::to_string(config.reference_m) +
                      "|walsh=" + util::g17(config.walsh_constant);
    return util::fnv1a64(tag);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    fields.push_back(current);
    return fields;
}

constexpr const char* kCsvHeader = "algorithm,L,estimate,abs_error,work";

} // namespace

void StudyConfig::validate() const {
    if (L_max < 1) throw Error(ErrorKind::validation, "L_max must be >= 1");
    if (m_cap < 1 || m_cap > 20) throw Error(ErrorKind::validation, "m_cap must be in [1, 20]");
    if (reference_level <= L_max) {
        throw Error(ErrorKind::validation, "reference level must exceed L_max");
    }
    if (reference_s < 1) throw Error(ErrorKind::validation, "reference s must be >= 1");
    if (reference_m < 1 || reference_m > 20) {
        throw Error(ErrorKind::validation, "reference m must be in [1, 20]");
    }
    if (reference_m < max_study_m(*this)) {
        throw Error(ErrorKind::validation, "reference m must cover every study rule size");
    }
    if (threads < 1) throw Error(ErrorKind::validation, "threads must be >= 1");
    if (!(walsh_constant > 0.0) || !std::isfinite(walsh_constant)) {
        throw Error(ErrorKind::validation, "walsh_constant must be positive and finite");
    }
    if (mode == ml::PlanMode::general) exponents.validate();
}

void finalize(StudyConfig& config) {
    if (config.reference_level < 0) config.reference_level = config.L_max + 1;
    if (config.reference_s < 0) config.reference_s = 2 * (1 << (config.L_max + 1));
    if (config.reference_m < 0) {
        config.reference_m = std::min(config.m_cap, max_study_m(config) + 2);
    }
    config.validate();
}

StudyConfig parse_config(const std::string& text) {
    StudyConfig config;
    for (const auto& [key, value] : util::parse_key_values(text)) {
        if (key == "L_max") {
            config.L_max = parse_int(key, value);
        } else if (key == "reference_level") {
            config.reference_level = parse_int(key, value);
        } else if (key == "reference_s") {
            config.reference_s = parse_int(key, value);
        } else if (key == "reference_m") {
            config.reference_m = parse_int(key, value);
        } else if (key == "m_cap") {
            config.m_cap = parse_int(key, value);
        } else if (key == "walsh_constant") {
            config.walsh_constant = parse_double(key, value);
        } else if (key == "threads") {
            config.threads = parse_int(key, value);
        } else if (key == "mode") {
            if (value == "paper4") {
                config.mode = ml::PlanMode::paper4;
            } else if (value == "general") {
                config.mode = ml::PlanMode::general;
            } else {
                throw Error(ErrorKind::validation, "mode must be paper4 or general: " + value);
            }
        } else if (key == "p0") {
            config.exponents.p0 = parse_double(key, value);
        } else if (key == "t") {
            config.exponents.t = parse_double(key, value);
        } else if (key == "t_prime") {
            config.exponents.t_prime = parse_double(key, value);
        } else if (key == "d") {
            config.exponents.d = parse_double(key, value);
        } else if (key == "out_dir") {
            config.out_dir = value;
        } else if (key == "cache_dir") {
            config.cache_dir = value;
        } else {
            throw Error(ErrorKind::validation, "unknown config key: " + key);
        }
    }
    return config;
}

StudyConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::validation, "cannot read config file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

double compute_reference(const StudyConfig& config, ml::DiskRuleCache& rules,
                         const ml::LevelIntegrand& integrand) {
    StudyConfig cfg = config;
    finalize(cfg);

    std::filesystem::path file;
    if (!cfg.cache_dir.empty()) {
        char name[64];
        std::snprintf(name, sizeof name, "reference-%016llx.json",
                      static_cast<unsigned long long>(reference_key(cfg)));
        file = std::filesystem::path(cfg.cache_dir) / name;
        if (std::filesystem::exists(file)) {
            nlohmann::json doc;
            try {
                std::ifstream in(file);
                doc = nlohmann::json::parse(in);
            } catch (const std::exception& e) {
                throw CacheCorrupt("reference cache " + file.string() + ": " + e.what());
            }
            if (!doc.is_object() || !doc.contains("value") || !doc["value"].is_number() ||
                doc.value("level", -1) != cfg.reference_level ||
                doc.value("s", -1) != cfg.reference_s || doc.value("m", -1) != cfg.reference_m) {
                throw CacheCorrupt("reference cache does not match its key: " + file.string());
            }
            return doc["value"].get<double>();
        }
    }

    plat::InterlacedRule rule =
        rules.get(cfg.reference_m, cfg.reference_s, 2,
                  ml::sl_weight_spec(cfg.reference_s, cfg.walsh_constant));
    double value =
        ml::rule_mean(rule, integrand, cfg.reference_level, cfg.reference_s, cfg.threads);

    if (!cfg.cache_dir.empty()) {
        std::filesystem::create_directories(cfg.cache_dir);
        nlohmann::json doc;
        doc["value"] = value;
        doc["level"] = cfg.reference_level;
        doc["s"] = cfg.reference_s;
        doc["m"] = cfg.reference_m;
        doc["points"] = 1ll << cfg.reference_m;
        doc["walsh_constant"] = cfg.walsh_constant;
        doc["rule_modulus"] = rule.modulus.bits;
        std::ofstream out(file);
        if (!out) throw Error(ErrorKind::validation, "cannot write " + file.string());
        out << doc.dump(2) << "\n";
    }
    return value;
}

std::vector<ConvergenceRecord> run_study(const StudyConfig& config, ml::DiskRuleCache& rules,
                                         const ml::LevelIntegrand& integrand) {
    StudyConfig cfg = config;
    finalize(cfg);
    double reference = compute_reference(cfg, rules, integrand);

    ml::RuleProvider sl_rules = [&](int m, int s) {
        return rules.get(m, s, 2, ml::sl_weight_spec(s, cfg.walsh_constant));
    };
    ml::RuleProvider ml_rules = [&](int m, int s) {
        return rules.get(m, s, 2, ml::ml_weight_spec(s, cfg.walsh_constant));
    };

    std::vector<ConvergenceRecord> records;
    for (int L = 1; L <= cfg.L_max; ++L) {
        ml::EstimateRecord sl = ml::single_level_estimate(L, sl_rules, integrand, cfg.threads);
        records.push_back({"SL", L, sl.estimate, std::abs(sl.estimate - reference), sl.work});
        ml::LevelPlan plan = ml::plan_levels(L, cfg.exponents, cfg.mode, cfg.m_cap);
        ml::EstimateRecord mlrec = ml::multi_level_estimate(plan, ml_rules, integrand,
                                                            cfg.threads);
        records.push_back(
            {"ML", L, mlrec.estimate, std::abs(mlrec.estimate - reference), mlrec.work});
    }
    std::sort(records.begin(), records.end(),
              [](const ConvergenceRecord& a, const ConvergenceRecord& b) {
                  if (a.algorithm != b.algorithm) return a.algorithm < b.algorithm;
                  return a.L < b.L;
              });
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        write_csv_file((std::filesystem::path(cfg.out_dir) / "study.csv").string(), records);
    }
    return records;
}

double fit_slope(std::span<const ConvergenceRecord> records, int last_k) {
    std::size_t count = records.size();
    std::size_t k = std::min<std::size_t>(count, last_k < 0 ? 0 : last_k);
    if (k < 2) throw DegenerateFit("slope fit needs at least 2 records");
    std::vector<double> x, y;
    for (std::size_t i = count - k; i < count; ++i) {
        if (!(records[i].work > 0.0)) throw DegenerateFit("nonpositive work in slope fit");
        if (!(records[i].abs_error > 0.0)) throw DegenerateFit("nonpositive error in slope fit");
        x.push_back(std::log(records[i].work));
        y.push_back(std::log(records[i].abs_error));
    }
    return util::lsq_slope(x, y);
}

void write_csv(std::ostream& out, std::span<const ConvergenceRecord> records) {
    out << kCsvHeader << "\n";
    for (const ConvergenceRecord& r : records) {
        out << r.algorithm << ',' << r.L << ',' << util::g17(r.estimate) << ','
            << util::g17(r.abs_error) << ',' << util::g17(r.work) << "\n";
    }
}

std::vector<ConvergenceRecord> read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::validation, "empty CSV input");
    if (util::trim(line) != kCsvHeader) {
        throw Error(ErrorKind::validation, "unexpected CSV header: " + line);
    }
    std::vector<ConvergenceRecord> records;
    while (std::getline(in, line)) {
        if (util::trim(line).empty()) continue;
        std::vector<std::string> fields = split_csv_line(util::trim(line));
        if (fields.size() != 5) {
            throw Error(ErrorKind::validation, "malformed CSV row: " + line);
        }
        ConvergenceRecord r;
        r.algorithm = fields[0];
        r.L = parse_int("L", fields[1]);
        r.estimate = parse_double("estimate", fields[2]);
        r.abs_error = parse_double("abs_error", fields[3]);
        r.work = parse_double("work", fields[4]);
        records.push_back(std::move(r));
    }
    return records;
}

void write_csv_file(const std::string& path, std::span<const ConvergenceRecord> records) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::validation, "cannot write CSV file: " + path);
    write_csv(out, records);
}

std::vector<ConvergenceRecord> read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::validation, "cannot read CSV file: " + path);
    return read_csv(in);
}

} // namespace hoqmc::harness
