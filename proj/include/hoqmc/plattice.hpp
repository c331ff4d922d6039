#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hoqmc/gf2poly.hpp"

namespace hoqmc::plat {

// Interlaced polynomial lattice rule: N = 2^m points in s dimensions, each
// dimension built by digit-interlacing alpha underlying lattice components.
struct InterlacedRule {
    int m = 0;
    int alpha = 1;
    int s = 0;
    gf2::BitPolynomial modulus;               // degree m
    std::vector<gf2::BitPolynomial> generators; // alpha*s entries, nonzero, degree < m

    // Generator for sub-component l (1-based) of dimension j (1-based).
    gf2::BitPolynomial generator(int j, int l) const {
        return generators[static_cast<std::size_t>((j - 1) * alpha + (l - 1))];
    }
};

// Throws a validation Error when a rule violates its structural contract
// (degree bounds, generator count, zero generators, alpha*m > 40).
void validate(const InterlacedRule& rule);

// Dyadic point set: every value has exactly `digits` = alpha*m binary digits,
// stored as integer numerators so digit-level operations stay exact.
struct PointSet {
    int rows = 0;
    int dims = 0;
    int digits = 0;
    bool centered = false;
    std::vector<std::uint64_t> num; // row-major, rows*dims

    std::uint64_t numerator(int n, int j) const {
        return num[static_cast<std::size_t>(n) * dims + (j - 1)];
    }
    // Value in [0,1) when raw, or [-1/2,1/2) when centered.
    double value(int n, int j) const;
};

// x_n^{(c)} as an m-digit numerator: the Laurent digits of
// n(x)*q_c(x)/P(x), c in [1, alpha*s]. Bit (m-a) holds digit a.
std::uint32_t raw_component(const InterlacedRule& rule, std::uint64_t n, int c);

// Digit a of sub-component l goes to output digit position (a-1)*alpha + l.
std::uint64_t interlace(std::span<const std::uint32_t> comps, int alpha, int m);

PointSet generate(const InterlacedRule& rule);

// Subtract 1/2 from every coordinate (exact on the dyadic representation).
PointSet shift_to_centered(const PointSet& pts);

// walsh(k, y) = (-1)^(sum_a kappa_a xi_a) where k = sum kappa_a 2^{a-1} and
// the numerator carries digits xi_a at bit (digits - a). Returns +1 or -1.
int walsh_sign(std::uint64_t k, std::uint64_t numerator, int digits);

// Precomputed multiplicative-group and Laurent tables for one irreducible
// modulus; shared by fast point generation and the CBC construction.
struct ModulusTables {
    int m = 0;
    std::uint32_t modulus = 0;
    std::uint32_t group_order = 0;        // 2^m - 1
    std::vector<std::uint32_t> expt;      // size 2*group_order: g^i, wrap-free
    std::vector<std::int32_t> logt;       // size 2^m; logt[0] = -1
    std::vector<std::uint32_t> numerator; // size 2^m: m-digit Laurent numerator of r/P

    explicit ModulusTables(gf2::BitPolynomial P);

    std::uint32_t mul(std::uint32_t a, std::uint32_t b) const {
        if (a == 0 || b == 0) return 0;
        return expt[static_cast<std::size_t>(logt[a]) + static_cast<std::size_t>(logt[b])];
    }
};

// Row-at-a-time point evaluation backed by ModulusTables; used by the
// estimators so large point sets never need materializing.
class PointGenerator {
public:
    explicit PointGenerator(InterlacedRule rule);

    int dims() const { return rule_.s; }
    int rows() const { return 1 << rule_.m; }

    // Writes coordinates 1..out.size() of point n, centered to [-1/2, 1/2).
    void centered_row(std::uint64_t n, std::span<double> out) const;

private:
    InterlacedRule rule_;
    ModulusTables tables_;
};

// Rule file: header lines m=, alpha=, s=, modulus=, then one decimal
// generator encoding per line.
void write_rule(std::ostream& out, const InterlacedRule& rule);
InterlacedRule read_rule(std::istream& in);
void write_rule_file(const std::string& path, const InterlacedRule& rule);
InterlacedRule read_rule_file(const std::string& path);

// CSV rows of 17-significant-digit coordinates, no header.
void write_points_csv(std::ostream& out, const PointSet& pts);

} // namespace hoqmc::plat
