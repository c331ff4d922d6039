#include "hoqmc/plattice.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "hoqmc/errors.hpp"
#include "hoqmc/util.hpp"

namespace hoqmc::plat {

void validate(const InterlacedRule& rule) {
    if (rule.m < 1 || rule.m > 40)
        throw Error(ErrorKind::validation, "rule m out of range [1, 40]");
    if (rule.alpha < 1)
        throw Error(ErrorKind::validation, "rule alpha must be >= 1");
    if (rule.s < 1)
        throw Error(ErrorKind::validation, "rule s must be >= 1");
    if (rule.alpha * rule.m > 40)
        throw Error(ErrorKind::validation,
                    "alpha*m > 40: interlaced digits would not be exact in a double");
    if (gf2::degree(rule.modulus) != rule.m)
        throw Error(ErrorKind::validation, "modulus degree does not equal m");
    if (rule.generators.size() != static_cast<std::size_t>(rule.alpha) * rule.s)
        throw Error(ErrorKind::validation, "rule must carry alpha*s generators");
    for (const auto& q : rule.generators) {
        if (q.bits == 0)
            throw Error(ErrorKind::validation, "zero generator");
        if (gf2::degree(q) >= rule.m)
            throw Error(ErrorKind::validation, "generator degree must be < m");
    }
}

double PointSet::value(int n, int j) const {
    double v = std::ldexp(static_cast<double>(numerator(n, j)), -digits);
    return centered ? v - 0.5 : v;
}

std::uint32_t raw_component(const InterlacedRule& rule, std::uint64_t n, int c) {
    gf2::BitPolynomial npoly{n};
    gf2::BitPolynomial prod =
        gf2::mul_mod(npoly, rule.generators[static_cast<std::size_t>(c - 1)], rule.modulus);
    auto digits = gf2::laurent_digits(prod, rule.modulus, rule.m);
    std::uint32_t out = 0;
    for (int a = 1; a <= rule.m; ++a) {
        out |= static_cast<std::uint32_t>(digits[static_cast<std::size_t>(a - 1)])
               << (rule.m - a);
    }
    return out;
}

std::uint64_t interlace(std::span<const std::uint32_t> comps, int alpha, int m) {
    std::uint64_t out = 0;
    int digits = alpha * m;
    for (int l = 1; l <= alpha; ++l) {
        std::uint32_t v = comps[static_cast<std::size_t>(l - 1)];
        for (int a = 1; a <= m; ++a) {
            std::uint64_t bit = (v >> (m - a)) & 1u;
            int pos = (a - 1) * alpha + l;
            out |= bit << (digits - pos);
        }
    }
    return out;
}

PointSet generate(const InterlacedRule& rule) {
    validate(rule);
    PointSet pts;
    pts.rows = 1 << rule.m;
    pts.dims = rule.s;
    pts.digits = rule.alpha * rule.m;
    pts.num.resize(static_cast<std::size_t>(pts.rows) * pts.dims);
    std::vector<std::uint32_t> comps(static_cast<std::size_t>(rule.alpha));
    for (int n = 0; n < pts.rows; ++n) {
        for (int j = 1; j <= rule.s; ++j) {
            for (int l = 1; l <= rule.alpha; ++l) {
                comps[static_cast<std::size_t>(l - 1)] =
                    raw_component(rule, static_cast<std::uint64_t>(n), (j - 1) * rule.alpha + l);
            }
            pts.num[static_cast<std::size_t>(n) * rule.s + (j - 1)] =
                interlace(comps, rule.alpha, rule.m);
        }
    }
    return pts;
}

PointSet shift_to_centered(const PointSet& pts) {
    PointSet out = pts;
    out.centered = true;
    return out;
}

int walsh_sign(std::uint64_t k, std::uint64_t numerator, int digits) {
    // kappa_a = bit (a-1) of k pairs with xi_a = bit (digits-a) of the
    // numerator; reversing the numerator aligns the two.
    std::uint64_t rev = 0;
    for (int a = 1; a <= digits; ++a) {
        rev |= ((numerator >> (digits - a)) & 1ull) << (a - 1);
    }
    return (std::popcount(k & rev) & 1) ? -1 : 1;
}

namespace {

std::vector<std::uint32_t> prime_factors(std::uint32_t v) {
    std::vector<std::uint32_t> out;
    for (std::uint32_t p = 2; static_cast<std::uint64_t>(p) * p <= v; ++p) {
        if (v % p == 0) {
            out.push_back(p);
            while (v % p == 0) v /= p;
        }
    }
    if (v > 1) out.push_back(v);
    return out;
}

std::uint32_t pow_mod(gf2::BitPolynomial base, std::uint32_t e, gf2::BitPolynomial P) {
    gf2::BitPolynomial acc{1};
    while (e != 0) {
        if (e & 1) acc = gf2::mul_mod(acc, base, P);
        base = gf2::mul_mod(base, base, P);
        e >>= 1;
    }
    return static_cast<std::uint32_t>(acc.bits);
}

} // namespace

ModulusTables::ModulusTables(gf2::BitPolynomial P) {
    m = gf2::degree(P);
    if (m < 1 || m > 25)
        throw Error(ErrorKind::validation, "modulus degree out of range [1, 25] for tables");
    if (!gf2::is_irreducible(P))
        throw Error(ErrorKind::validation,
                    "group tables require an irreducible modulus");
    modulus = static_cast<std::uint32_t>(P.bits);
    group_order = (1u << m) - 1;

    auto factors = prime_factors(group_order);
    std::uint32_t gen = 0;
    for (std::uint32_t cand = group_order == 1 ? 1 : 2; cand <= group_order; ++cand) {
        bool ok = true;
        for (std::uint32_t p : factors) {
            if (pow_mod(gf2::BitPolynomial{cand}, group_order / p, P) == 1) {
                ok = false;
                break;
            }
        }
        if (ok) {
            gen = cand;
            break;
        }
    }
    if (gen == 0) throw Error(ErrorKind::numerical, "no group generator found");

    expt.resize(2 * static_cast<std::size_t>(group_order));
    logt.assign(std::size_t{1} << m, -1);
    gf2::BitPolynomial cur{1};
    for (std::uint32_t i = 0; i < group_order; ++i) {
        auto enc = static_cast<std::uint32_t>(cur.bits);
        expt[i] = enc;
        expt[i + group_order] = enc;
        logt[enc] = static_cast<std::int32_t>(i);
        cur = gf2::mul_mod(cur, gf2::BitPolynomial{gen}, P);
    }
    if (cur.bits != 1) throw Error(ErrorKind::numerical, "group order mismatch");

    numerator.resize(std::size_t{1} << m);
    for (std::uint32_t r = 0; r < (1u << m); ++r) {
        auto digits = gf2::laurent_digits(gf2::BitPolynomial{r}, P, m);
        std::uint32_t v = 0;
        for (int a = 1; a <= m; ++a) {
            v |= static_cast<std::uint32_t>(digits[static_cast<std::size_t>(a - 1)])
                 << (m - a);
        }
        numerator[r] = v;
    }
}

namespace {
InterlacedRule validated(InterlacedRule rule) {
    validate(rule);
    return rule;
}
} // namespace

PointGenerator::PointGenerator(InterlacedRule rule)
    : rule_(validated(std::move(rule))), tables_(rule_.modulus) {}

void PointGenerator::centered_row(std::uint64_t n, std::span<double> out) const {
    int digits = rule_.alpha * rule_.m;
    auto r = static_cast<std::uint32_t>(n);
    for (std::size_t j = 0; j < out.size(); ++j) {
        std::uint64_t x = 0;
        for (int l = 1; l <= rule_.alpha; ++l) {
            std::uint32_t q = static_cast<std::uint32_t>(
                rule_.generators[j * rule_.alpha + (l - 1)].bits);
            std::uint32_t comp = tables_.numerator[tables_.mul(r, q)];
            for (int a = 1; a <= rule_.m; ++a) {
                std::uint64_t bit = (comp >> (rule_.m - a)) & 1u;
                int pos = (a - 1) * rule_.alpha + l;
                x |= bit << (digits - pos);
            }
        }
        out[j] = std::ldexp(static_cast<double>(x), -digits) - 0.5;
    }
}

void write_rule(std::ostream& out, const InterlacedRule& rule) {
    out << "m=" << rule.m << "\n";
    out << "alpha=" << rule.alpha << "\n";
    out << "s=" << rule.s << "\n";
    out << "modulus=" << gf2::to_decimal(rule.modulus) << "\n";
    for (const auto& q : rule.generators) out << gf2::to_decimal(q) << "\n";
}

InterlacedRule read_rule(std::istream& in) {
    InterlacedRule rule;
    auto next_line = [&in](const char* what) {
        std::string line;
        if (!std::getline(in, line))
            throw Error(ErrorKind::validation, std::string("rule file truncated before ") + what);
        return util::trim(line);
    };
    auto header = [&](const char* key) {
        std::string line = next_line(key);
        std::string prefix = std::string(key) + "=";
        if (line.rfind(prefix, 0) != 0)
            throw Error(ErrorKind::validation,
                        std::string("rule file: expected '") + prefix + "...', got '" + line + "'");
        return line.substr(prefix.size());
    };
    try {
        rule.m = std::stoi(header("m"));
        rule.alpha = std::stoi(header("alpha"));
        rule.s = std::stoi(header("s"));
    } catch (const std::exception&) {
        throw Error(ErrorKind::validation, "rule file: malformed integer header");
    }
    rule.modulus = gf2::parse_poly(header("modulus"));
    if (rule.alpha < 1 || rule.s < 1 || rule.m < 1 || rule.m > 40 ||
        rule.alpha > 40 || rule.s > (1 << 22))
        throw Error(ErrorKind::validation, "rule file: header values out of range");
    std::size_t count = static_cast<std::size_t>(rule.alpha) * rule.s;
    rule.generators.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        rule.generators.push_back(gf2::parse_poly(next_line("generator")));
    }
    validate(rule);
    return rule;
}

void write_rule_file(const std::string& path, const InterlacedRule& rule) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::validation, "cannot open rule file for writing: " + path);
    write_rule(out, rule);
    if (!out) throw Error(ErrorKind::validation, "failed writing rule file: " + path);
}

InterlacedRule read_rule_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::validation, "cannot open rule file: " + path);
    return read_rule(in);
}

void write_points_csv(std::ostream& out, const PointSet& pts) {
    for (int n = 0; n < pts.rows; ++n) {
        for (int j = 1; j <= pts.dims; ++j) {
            if (j > 1) out << ',';
            out << util::g17(pts.value(n, j));
        }
        out << '\n';
    }
}

} // namespace hoqmc::plat
