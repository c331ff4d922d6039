#include "hoqmc/gf2poly.hpp"

#include <bit>
#include <cerrno>
#include <cstdlib>

#include "hoqmc/errors.hpp"

namespace hoqmc::gf2 {

int degree(BitPolynomial p) {
    return static_cast<int>(std::bit_width(p.bits)) - 1;
}

BitPolynomial add(BitPolynomial a, BitPolynomial b) {
    return BitPolynomial{a.bits ^ b.bits};
}

BitPolynomial mod(BitPolynomial a, BitPolynomial b) {
    int db = degree(b);
    if (db < 0) throw ZeroModulus("division by the zero polynomial");
    while (true) {
        int da = degree(a);
        if (da < db) return a;
        a.bits ^= b.bits << (da - db);
    }
}

BitPolynomial mul_mod(BitPolynomial a, BitPolynomial b, BitPolynomial P) {
    int dp = degree(P);
    if (dp < 1) throw ZeroModulus();
    a = mod(a, P);
    b = mod(b, P);
    // Shift-and-add with reduction every step keeps all intermediates below
    // degree dp; no overflow for any dp <= 63.
    std::uint64_t acc = 0;
    std::uint64_t shifted = a.bits;
    std::uint64_t rest = b.bits;
    while (rest != 0) {
        if (rest & 1) acc ^= shifted;
        rest >>= 1;
        shifted <<= 1;
        if ((shifted >> dp) & 1) shifted ^= P.bits;
    }
    return BitPolynomial{acc};
}

bool is_irreducible(BitPolynomial P) {
    int dp = degree(P);
    if (dp < 1) return false;
    if (dp == 1) return true;
    for (int d = 1; d <= dp / 2; ++d) {
        std::uint64_t lo = 1ull << d;
        std::uint64_t hi = 1ull << (d + 1);
        for (std::uint64_t q = lo; q < hi; ++q) {
            if (mod(P, BitPolynomial{q}).bits == 0) return false;
        }
    }
    return true;
}

BitPolynomial smallest_irreducible(int m) {
    if (m < 1 || m > 62) throw DegreeOverflow("irreducible degree must be in [1, 62]");
    for (std::uint64_t enc = 1ull << m; enc < (2ull << m); ++enc) {
        BitPolynomial p{enc};
        if (is_irreducible(p)) return p;
    }
    throw Error(ErrorKind::numerical, "no irreducible polynomial found");
}

std::vector<std::uint8_t> laurent_digits(BitPolynomial u, BitPolynomial P, int r) {
    int dp = degree(P);
    if (dp < 1) throw ZeroModulus();
    if (degree(u) >= dp) u = mod(u, P);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(r < 0 ? 0 : r), 0);
    std::uint64_t cur = u.bits;
    for (std::size_t l = 0; l < out.size(); ++l) {
        cur <<= 1;
        if ((cur >> dp) & 1) {
            out[l] = 1;
            cur ^= P.bits;
        }
    }
    return out;
}

std::string to_decimal(BitPolynomial p) {
    return std::to_string(p.bits);
}

BitPolynomial parse_poly(const std::string& text) {
    if (text.empty()) throw Error(ErrorKind::validation, "empty polynomial literal");
    for (char c : text) {
        if (c < '0' || c > '9') {
            throw Error(ErrorKind::validation, "polynomial literal is not a decimal integer: " + text);
        }
    }
    errno = 0;
    char* end = nullptr;
    unsigned long long v = std::strtoull(text.c_str(), &end, 10);
    if (errno == ERANGE || end != text.c_str() + text.size()) {
        throw DegreeOverflow("polynomial literal out of range: " + text);
    }
    return BitPolynomial{v};
}

} // namespace hoqmc::gf2
