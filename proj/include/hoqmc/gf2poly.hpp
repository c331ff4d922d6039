#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hoqmc::gf2 {

// Polynomial over GF(2), bit-packed in one machine word: bit i holds the
// coefficient of x^i. Degree of the zero polynomial is -1.
struct BitPolynomial {
    std::uint64_t bits = 0;

    friend bool operator==(const BitPolynomial&, const BitPolynomial&) = default;
};

inline BitPolynomial poly(std::uint64_t bits) { return BitPolynomial{bits}; }

int degree(BitPolynomial p);

// Coefficient-wise sum; characteristic 2, so every element is its own
// additive inverse.
BitPolynomial add(BitPolynomial a, BitPolynomial b);

// Remainder of a modulo b (b nonzero).
BitPolynomial mod(BitPolynomial a, BitPolynomial b);

// (a*b) mod P; result degree < deg P. Throws ZeroModulus unless deg P >= 1.
BitPolynomial mul_mod(BitPolynomial a, BitPolynomial b, BitPolynomial P);

// True iff P has no factor of degree in [1, deg P - 1]; trial division up to
// degree floor(deg P / 2).
bool is_irreducible(BitPolynomial P);

// The degree-m irreducible polynomial with the smallest integer encoding
// (x^i -> 2^i).
BitPolynomial smallest_irreducible(int m);

// First r coefficients t_1..t_r of the Laurent expansion
// u/P = sum_{l>=1} t_l x^{-l}. Requires deg u < deg P.
std::vector<std::uint8_t> laurent_digits(BitPolynomial u, BitPolynomial P, int r);

// Decimal coefficient-integer serialization, e.g. x^2+x+1 <-> "7".
std::string to_decimal(BitPolynomial p);
BitPolynomial parse_poly(const std::string& text);

} // namespace hoqmc::gf2
