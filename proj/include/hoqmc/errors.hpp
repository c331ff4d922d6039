#pragma once

#include <stdexcept>
#include <string>

namespace hoqmc {

// Failure category, mapped to process exit codes by the CLI:
// validation -> 2, numerical -> 3.
enum class ErrorKind { validation, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define HOQMC_DEFINE_ERROR(Name, Kind, default_msg)                          \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what = default_msg)                 \
            : Error(ErrorKind::Kind, what) {}                                \
    }

HOQMC_DEFINE_ERROR(ZeroModulus, validation, "modulus polynomial is zero or constant");
HOQMC_DEFINE_ERROR(DegreeOverflow, validation, "polynomial degree exceeds 63");
HOQMC_DEFINE_ERROR(AlphaTooSmall, validation, "interlacing factor must be at least 2");
HOQMC_DEFINE_ERROR(CandidatesExhausted, validation,
                   "pruning requires alpha*s <= 2^m - 1 candidates");
HOQMC_DEFINE_ERROR(LambdaOutOfRange, validation, "lambda outside (1/alpha, 1]");
HOQMC_DEFINE_ERROR(InvalidRegime, validation, "exponents outside the valid regime");
HOQMC_DEFINE_ERROR(InvalidExponents, validation, "invalid problem exponents");
HOQMC_DEFINE_ERROR(CacheCorrupt, validation, "reference cache file is corrupt");

HOQMC_DEFINE_ERROR(Overflow, numerical, "result exceeds representable range");
HOQMC_DEFINE_ERROR(ZeroPivot, numerical, "system matrix has a non-positive diagonal");
HOQMC_DEFINE_ERROR(NoConvergence, numerical, "iterative solver failed to converge");
HOQMC_DEFINE_ERROR(DegenerateFit, numerical, "insufficient spread for slope fit");

#undef HOQMC_DEFINE_ERROR

} // namespace hoqmc
