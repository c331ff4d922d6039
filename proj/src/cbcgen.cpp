#include "hoqmc/cbcgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>
#include <sstream>

#include <fftw3.h>

#include "hoqmc/errors.hpp"
#include "hoqmc/util.hpp"

namespace hoqmc::cbc {

namespace {

constexpr int kFftCrossoverM = 10;  // automatic path: FFT scan for m >= this
constexpr int kMaxOrder = 256;      // hard cap on tracked SPOD order
constexpr double kOrderTruncation = 1e-30;
// Candidates whose criterion lies within this relative window of the scan
// minimum are treated as tied, and the smallest encoding wins.  Mathematically
// equal values (e.g. a candidate and its group inverse on the first
// coordinate) round differently depending on accumulation order, so a strict
// comparison would break ties by floating-point noise and make the direct and
// transform scan paths disagree.
constexpr double kTieWindow = 1e-9;

std::mutex& fftw_mutex() {
    return util::fftw_planner_mutex();
}

double phi_first_digit(int i, int alpha) {
    double sum = 0.0;
    for (int a = 1; a < i; ++a) sum += std::ldexp(1.0, (1 - alpha) * a);
    return 0.5 * sum - 0.5 * std::ldexp(1.0, (1 - alpha) * i);
}

// Gamma_{l+nu} / Gamma_l for the configured order factor.
double order_ratio_up(int l, int nu, OrderFactor kind) {
    double r = 1.0;
    if (kind == OrderFactor::shifted_factorial) {
        for (int i = 1; i <= nu; ++i) r *= static_cast<double>(l + 3 + i);
    } else {
        for (int i = 1; i <= nu; ++i) r *= static_cast<double>(l + i);
    }
    return r;
}

double log_order_factor(long long l, OrderFactor kind) {
    return kind == OrderFactor::shifted_factorial ? std::lgamma(static_cast<double>(l) + 4.0)
                                                  : std::lgamma(static_cast<double>(l) + 1.0);
}

} // namespace

double SpodWeightSpec::coord_weight(int j, int nu) const {
    double b = beta[static_cast<std::size_t>(j - 1)];
    double w = 1.0;
    for (int i = 0; i < nu; ++i) w *= b;
    if (nu == alpha && alpha >= 2) w *= 2.0;
    return w;
}

SpodWeightSpec SpodWeightSpec::truncated(int s_new) const {
    SpodWeightSpec out = *this;
    if (s_new < 0 || s_new > s())
        throw Error(ErrorKind::validation, "cannot truncate weight spec beyond its length");
    out.beta.resize(static_cast<std::size_t>(s_new));
    return out;
}

void SpodWeightSpec::validate() const {
    if (alpha < 1) throw Error(ErrorKind::validation, "weight spec alpha must be >= 1");
    if (!(walsh_constant > 0.0))
        throw Error(ErrorKind::validation, "walsh_constant must be positive");
    for (double b : beta) {
        if (!(b >= 0.0) || !std::isfinite(b))
            throw Error(ErrorKind::validation, "weight spec requires nonnegative finite beta");
    }
}

std::uint64_t SpodWeightSpec::fingerprint() const {
    std::ostringstream os;
    os << "alpha=" << alpha << ";order="
       << (order_factor == OrderFactor::shifted_factorial ? "shifted" : "plain")
       << ";C=" << util::g17(walsh_constant) << ";beta=";
    for (double b : beta) os << util::g17(b) << ',';
    return util::fnv1a64(os.str());
}

double spod_weight(std::span<const int> u, const SpodWeightSpec& spec) {
    spec.validate();
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (u[i] < 1 || u[i] > spec.s())
            throw Error(ErrorKind::validation, "spod_weight index outside [1, s]");
        for (std::size_t k = i + 1; k < u.size(); ++k)
            if (u[i] == u[k])
                throw Error(ErrorKind::validation, "spod_weight index set has a repeat");
    }
    if (u.empty()) return 1.0;

    int alpha = spec.alpha;
    int cap = alpha * static_cast<int>(u.size());

    if (cap <= 150) {
        // Plain-double order recursion without the identity carry, so every
        // coordinate in u contributes at least order 1. All terms are
        // positive, so intermediate values never exceed the final sum scale.
        std::vector<double> t(static_cast<std::size_t>(cap) + 1, 0.0);
        t[0] = 1.0;
        int top = 0;
        for (int j : u) {
            std::vector<double> nt(static_cast<std::size_t>(cap) + 1, 0.0);
            int ntop = std::min(top + alpha, cap);
            for (int l = ntop; l >= 1; --l) {
                double acc = 0.0;
                for (int nu = 1; nu <= std::min(alpha, l); ++nu) {
                    acc += spec.coord_weight(j, nu) * t[static_cast<std::size_t>(l - nu)];
                }
                nt[static_cast<std::size_t>(l)] = acc;
            }
            t.swap(nt);
            top = ntop;
        }
        double gamma_factor =
            spec.order_factor == OrderFactor::shifted_factorial ? 6.0 : 1.0;
        double total = 0.0;
        bool finite = true;
        for (int l = 1; l <= top; ++l) {
            gamma_factor *= order_ratio_up(l - 1, 1, spec.order_factor);
            if (!std::isfinite(gamma_factor)) {
                finite = false;
                break;
            }
            total += gamma_factor * t[static_cast<std::size_t>(l)];
        }
        if (finite && std::isfinite(total)) return total;
        // fall through to the log-domain path
    }

    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    auto logsum2 = [](double a, double b) {
        if (a == kNegInf) return b;
        if (b == kNegInf) return a;
        double hi = std::max(a, b);
        return hi + std::log1p(std::exp(std::min(a, b) - hi));
    };
    std::vector<double> lt(static_cast<std::size_t>(cap) + 1, kNegInf);
    lt[0] = 0.0;
    for (int j : u) {
        std::vector<double> nlt(static_cast<std::size_t>(cap) + 1, kNegInf);
        for (int l = 1; l <= cap; ++l) {
            double acc = kNegInf;
            for (int nu = 1; nu <= std::min(alpha, l); ++nu) {
                if (lt[static_cast<std::size_t>(l - nu)] == kNegInf) continue;
                acc = logsum2(acc, std::log(spec.coord_weight(j, nu)) +
                                       lt[static_cast<std::size_t>(l - nu)]);
            }
            nlt[static_cast<std::size_t>(l)] = acc;
        }
        lt.swap(nlt);
    }
    double log_total = kNegInf;
    for (int l = 1; l <= cap; ++l) {
        if (lt[static_cast<std::size_t>(l)] == kNegInf) continue;
        log_total = logsum2(log_total,
                            log_order_factor(l, spec.order_factor) + lt[static_cast<std::size_t>(l)]);
    }
    if (log_total > std::log(std::numeric_limits<double>::max()))
        throw Overflow("spod weight exceeds double range");
    return std::exp(log_total);
}

double kernel_phi(double x, int alpha) {
    if (alpha < 2) throw AlphaTooSmall();
    if (!(x >= 0.0 && x < 1.0))
        throw Error(ErrorKind::validation, "kernel_phi argument must lie in [0,1)");
    if (x == 0.0) return std::ldexp(1.0, -alpha) / (1.0 - std::ldexp(1.0, 1 - alpha));
    int e = 0;
    std::frexp(x, &e); // x = f * 2^e with f in [0.5, 1)
    return phi_first_digit(1 - e, alpha);
}

std::vector<double> depth_kernel_table(int m, int alpha) {
    if (alpha < 2) throw AlphaTooSmall();
    if (m < 1 || m > 25)
        throw Error(ErrorKind::validation, "depth kernel table requires 1 <= m <= 25");
    const std::size_t n = std::size_t{1} << m;
    // Coefficient of a counted one-digit at depth a: 2^{-alpha*a}.
    auto coef = [&](int a) {
        long long e = static_cast<long long>(a) * alpha;
        return e > 1073 ? 0.0 : std::ldexp(1.0, static_cast<int>(-e));
    };
    // Digits deeper than m (shared by every index in a truncated class) are
    // folded in exactly. With b deep one-digits, the deepest min(b, alpha)
    // are counted and the rest sit strictly above the shallowest counted one:
    //   g[b] (b < alpha): total mass of exactly b deep digits, all counted;
    //   big: total mass of >= alpha deep digits — the alpha counted ones at
    //        depths p_1 < ... < p_alpha plus any subset of the p_1 - m - 1
    //        slots between m and p_1 (factor 2^{p_1 - m - 1}).
    // Coefficients decay by 2^{-alpha} per depth step, so both series are
    // convergent geometric sums; they hit double underflow past depth ~1074.
    const int tail_top = m + (1100 + alpha) / alpha + 2;
    std::vector<double> g(static_cast<std::size_t>(alpha), 0.0);
    g[0] = 1.0;
    for (int p = m + 1; p <= tail_top; ++p) {
        double c = coef(p);
        for (int b = alpha - 1; b >= 1; --b)
            g[static_cast<std::size_t>(b)] += g[static_cast<std::size_t>(b - 1)] * c;
    }
    double big = 0.0;
    {
        std::vector<double> deeper(static_cast<std::size_t>(alpha), 0.0);
        deeper[0] = 1.0; // elementary symmetric sums of coef at depths > p
        for (int p = tail_top; p >= m + 1; --p) {
            double c = coef(p);
            big += std::ldexp(c * deeper[static_cast<std::size_t>(alpha - 1)], p - m - 1);
            for (int b = alpha - 1; b >= 1; --b)
                deeper[static_cast<std::size_t>(b)] += deeper[static_cast<std::size_t>(b - 1)] * c;
        }
    }
    // Mass of every index whose first m digits match kt: the class pattern
    // contributes its deepest min(v, alpha - b) one-digits when b of the
    // counted slots are taken by deeper tail digits.
    std::vector<double> r(n, 0.0);
    std::vector<double> d(static_cast<std::size_t>(alpha) + 1, 1.0);
    for (std::size_t kt = 0; kt < n; ++kt) {
        int v = 0;
        for (int bit = m - 1; bit >= 0 && v < alpha; --bit) {
            if (kt >> bit & 1u) {
                d[static_cast<std::size_t>(v + 1)] = d[static_cast<std::size_t>(v)] * coef(bit + 1);
                ++v;
            }
        }
        double acc = big;
        for (int b = 0; b < alpha; ++b)
            acc += g[static_cast<std::size_t>(b)] * d[static_cast<std::size_t>(std::min(v, alpha - b))];
        r[kt] = acc;
    }
    r[0] -= 1.0; // the series starts at k = 1
    // Fast Walsh-Hadamard transform: W[t] = sum_kt (-1)^{popcount(kt & t)} r[kt].
    for (std::size_t len = 1; len < n; len <<= 1) {
        for (std::size_t i = 0; i < n; i += len << 1) {
            for (std::size_t k = i; k < i + len; ++k) {
                double a = r[k], b = r[k + len];
                r[k] = a + b;
                r[k + len] = a - b;
            }
        }
    }
    // Index bit j of k pairs digit j+1 of x, which is bit m-1-j of the
    // numerator, so the table is the transform read at the bit-reversed slot.
    std::vector<double> out(n);
    for (std::size_t x = 0; x < n; ++x) {
        std::size_t rev = 0;
        for (int bit = 0; bit < m; ++bit) rev |= ((x >> bit) & 1u) << (m - 1 - bit);
        out[x] = r[rev];
    }
    return out;
}

// ---------------------------------------------------------------------------
// CBC driver

struct CbcDriver::Impl {
    int m, s, alpha, threads;
    ScanPath path;
    CbcKernel kernel;
    SpodWeightSpec spec;
    plat::ModulusTables tab;
    int N, M;

    double phi0;            // kernel value at x = 0
    std::vector<double> fp; // size 2M: kernel value of exp[i], wrap-free

    // Scaled order states St_n(l) = Gamma_l * S_n(l), row-major with stride.
    std::vector<double> state;
    int stride = 0;
    int lmax = 0;
    std::vector<double> partial; // running prod (1+phi) within the coordinate
    int step = 0;
    std::vector<gf2::BitPolynomial> chosen;

    // Per-coordinate scan cache (valid while coord_tag == step / alpha).
    int coord_tag = -1;
    std::vector<double> v;   // V_n
    double t_sum = 0, v_sum = 0;

    // Step scratch.
    mutable std::vector<double> pv_n, pv_log, rbuf, scratch;

    // FFT machinery (lazy).
    bool fft_ready = false;
    double* fft_in = nullptr;
    double* fft_out = nullptr;
    fftw_complex* fft_u = nullptr;
    fftw_complex* fft_v = nullptr;
    fftw_plan plan_fwd = nullptr;
    fftw_plan plan_inv = nullptr;

    Impl(int m_, int s_, int alpha_, SpodWeightSpec spec_, gf2::BitPolynomial modulus,
         int threads_, ScanPath path_, CbcKernel kernel_)
        : m(m_), s(s_), alpha(alpha_), threads(threads_), path(path_), kernel(kernel_),
          spec(std::move(spec_)), tab(modulus) {
        if (m < 1) throw Error(ErrorKind::validation, "cbc requires m >= 1");
        if (s < 1) throw Error(ErrorKind::validation, "cbc requires s >= 1");
        if (alpha < 2) throw AlphaTooSmall();
        if (spec.alpha != alpha)
            throw Error(ErrorKind::validation, "weight spec alpha must match rule alpha");
        if (spec.s() < s)
            throw Error(ErrorKind::validation, "weight spec shorter than dimension");
        spec.validate();
        N = 1 << m;
        M = (1 << m) - 1;

        fp.resize(2 * static_cast<std::size_t>(M));
        if (kernel == CbcKernel::first_digit) {
            // Residue of degree d has its first nonzero Laurent digit at
            // m - d, so the closed form needs only the residue degree.
            std::vector<double> phi_by_deg(static_cast<std::size_t>(m) + 1);
            phi_by_deg[0] = kernel_phi(0.0, alpha);
            for (int d = 0; d < m; ++d)
                phi_by_deg[static_cast<std::size_t>(d) + 1] = phi_first_digit(m - d, alpha);
            for (int i = 0; i < 2 * M; ++i) {
                fp[static_cast<std::size_t>(i)] =
                    phi_by_deg[static_cast<std::size_t>(gf2::degree(gf2::BitPolynomial{
                                   tab.expt[static_cast<std::size_t>(i % M)]})) +
                               1];
            }
            phi0 = phi_by_deg[0];
        } else {
            std::vector<double> table = depth_kernel_table(m, alpha);
            for (int i = 0; i < 2 * M; ++i) {
                fp[static_cast<std::size_t>(i)] =
                    table[tab.numerator[tab.expt[static_cast<std::size_t>(i % M)]]];
            }
            phi0 = table[0];
        }

        stride = std::min(alpha + 1, kMaxOrder + 1);
        state.assign(static_cast<std::size_t>(N) * stride, 0.0);
        double gamma0 = !flat_orders() && spec.order_factor == OrderFactor::shifted_factorial
                            ? 6.0
                            : 1.0;
        for (int n = 0; n < N; ++n) state[static_cast<std::size_t>(n) * stride] = gamma0;
        lmax = 0;
        partial.assign(static_cast<std::size_t>(N), 1.0);
        pv_n.resize(static_cast<std::size_t>(N));
        pv_log.resize(static_cast<std::size_t>(M));
        rbuf.resize(static_cast<std::size_t>(M));
        scratch.resize(static_cast<std::size_t>(N));
    }

    ~Impl() {
        if (fft_ready) {
            std::lock_guard<std::mutex> lock(fftw_mutex());
            fftw_destroy_plan(plan_fwd);
            fftw_destroy_plan(plan_inv);
            fftw_free(fft_in);
            fftw_free(fft_out);
            fftw_free(fft_u);
            fftw_free(fft_v);
        }
    }

    bool use_fft() const {
        if (path == ScanPath::direct) return false;
        if (path == ScanPath::fft) return true;
        return m >= kFftCrossoverM;
    }

    int cur_coord() const { return step / alpha; } // 0-based

    // The depth-weighted objective is order-flat: with Gamma_l = 1 the order
    // sum factorizes into product weights gamma_j = sum_nu w_j(nu), which
    // keeps the scan landscape driven by dual masses instead of the
    // factorial order growth (that growth swamps the quality signal and the
    // minimizer stops tracking true integration error).
    bool flat_orders() const { return kernel == CbcKernel::depth_weighted; }
    double ratio_up(int l, int nu) const {
        return flat_orders() ? 1.0 : order_ratio_up(l, nu, spec.order_factor);
    }

    void grow_stride(int need) {
        if (need < stride) return;
        int ns = std::min(std::max(2 * stride, need + 1), kMaxOrder + 1);
        if (need >= ns) throw Overflow("SPOD order cap exceeded");
        std::vector<double> next(static_cast<std::size_t>(N) * ns, 0.0);
        for (int n = 0; n < N; ++n) {
            std::memcpy(&next[static_cast<std::size_t>(n) * ns],
                        &state[static_cast<std::size_t>(n) * stride],
                        sizeof(double) * static_cast<std::size_t>(stride));
        }
        state.swap(next);
        stride = ns;
    }

    // Fold the completed coordinate j (1-based) into the order state.
    void fold_coordinate(int j) {
        int nl = std::min(lmax + alpha, kMaxOrder);
        grow_stride(nl);
        double wj[64];
        for (int nu = 1; nu <= alpha; ++nu) wj[nu] = spec.coord_weight(j, nu);
        double cw = spec.walsh_constant;
        util::parallel_for(static_cast<std::size_t>(N), threads, [&](std::size_t n) {
            double* row = &state[n * static_cast<std::size_t>(stride)];
            double k = cw * (partial[n] - 1.0);
            for (int l = nl; l >= 1; --l) {
                double acc = 0.0;
                for (int nu = 1; nu <= std::min(alpha, l); ++nu) {
                    acc += wj[nu] * ratio_up(l - nu, nu) * row[l - nu];
                }
                row[l] += k * acc;
            }
            partial[n] = 1.0;
        });
        lmax = nl;

        // Truncate trailing orders whose contribution is negligible.
        double total = 0.0;
        std::vector<double> colsum(static_cast<std::size_t>(lmax) + 1, 0.0);
        for (int n = 0; n < N; ++n) {
            const double* row = &state[static_cast<std::size_t>(n) * stride];
            for (int l = 1; l <= lmax; ++l) colsum[static_cast<std::size_t>(l)] += std::abs(row[l]);
        }
        for (int l = 1; l <= lmax; ++l) total += colsum[static_cast<std::size_t>(l)];
        if (!std::isfinite(total)) throw Overflow("criterion state left double range");
        while (lmax > 0 && colsum[static_cast<std::size_t>(lmax)] < kOrderTruncation * total)
            --lmax;
        coord_tag = -1;
    }

    // Build V_n, T_sum, V_sum for the active coordinate.
    void ensure_coord_cache() {
        if (coord_tag == cur_coord()) return;
        int j = cur_coord() + 1;
        std::vector<double> gj(static_cast<std::size_t>(lmax) + 1, 0.0);
        for (int l = 0; l <= lmax; ++l) {
            double acc = 0.0;
            for (int nu = 1; nu <= alpha; ++nu) {
                acc += spec.coord_weight(j, nu) * ratio_up(l, nu);
            }
            gj[static_cast<std::size_t>(l)] = acc;
        }
        v.resize(static_cast<std::size_t>(N));
        util::parallel_for(static_cast<std::size_t>(N), threads, [&](std::size_t n) {
            const double* row = &state[n * static_cast<std::size_t>(stride)];
            double acc = 0.0;
            for (int l = 0; l <= lmax; ++l) acc += row[l] * gj[static_cast<std::size_t>(l)];
            v[n] = acc;
            double t = 0.0;
            for (int l = 1; l <= lmax; ++l) t += row[l];
            scratch[n] = t;
        });
        t_sum = util::pairwise_sum(scratch);
        v_sum = util::pairwise_sum(v);
        coord_tag = cur_coord();
    }

    // pv_n, pv_log and the scan constants for the current sub-component.
    struct ScanSetup {
        double base;
        double coef; // E(q) = base + coef * R(log q)
    };
    ScanSetup prepare_scan(double k_scale) {
        ensure_coord_cache();
        util::parallel_for(static_cast<std::size_t>(N), threads,
                           [&](std::size_t n) { pv_n[n] = partial[n] * v[n]; });
        double pv_sum = util::pairwise_sum(pv_n);
        util::parallel_for(static_cast<std::size_t>(M), threads, [&](std::size_t i) {
            pv_log[i] = pv_n[tab.expt[i]];
        });
        double c = spec.walsh_constant * k_scale;
        ScanSetup setup;
        setup.base = (t_sum + c * (pv_sum - v_sum + pv_n[0] * phi0)) / static_cast<double>(N);
        setup.coef = c / static_cast<double>(N);
        return setup;
    }

    void ensure_fft() {
        if (fft_ready) return;
        std::lock_guard<std::mutex> lock(fftw_mutex());
        int nc = M / 2 + 1;
        fft_in = fftw_alloc_real(static_cast<std::size_t>(M));
        fft_out = fftw_alloc_real(static_cast<std::size_t>(M));
        fft_u = fftw_alloc_complex(static_cast<std::size_t>(nc));
        fft_v = fftw_alloc_complex(static_cast<std::size_t>(nc));
        plan_fwd = fftw_plan_dft_r2c_1d(M, fft_in, fft_u, FFTW_ESTIMATE);
        plan_inv = fftw_plan_dft_c2r_1d(M, fft_u, fft_out, FFTW_ESTIMATE);
        // Spectrum of the kernel sequence, computed once.
        std::memcpy(fft_in, fp.data(), sizeof(double) * static_cast<std::size_t>(M));
        fftw_execute(plan_fwd);
        std::memcpy(fft_v, fft_u, sizeof(fftw_complex) * static_cast<std::size_t>(nc));
        fft_ready = true;
    }

    // Correlation R(k) = sum_i pv_log[i] * fp[i + k] for all k, into rbuf.
    void correlation_fft() {
        ensure_fft();
        std::memcpy(fft_in, pv_log.data(), sizeof(double) * static_cast<std::size_t>(M));
        fftw_execute(plan_fwd);
        int nc = M / 2 + 1;
        for (int f = 0; f < nc; ++f) {
            // conj(U) * V
            double ur = fft_u[f][0], ui = fft_u[f][1];
            double vr = fft_v[f][0], vi = fft_v[f][1];
            fft_u[f][0] = ur * vr + ui * vi;
            fft_u[f][1] = ur * vi - ui * vr;
        }
        fftw_execute(plan_inv);
        double inv_m = 1.0 / static_cast<double>(M);
        for (int k = 0; k < M; ++k) rbuf[static_cast<std::size_t>(k)] = fft_out[k] * inv_m;
    }

    void correlation_direct() {
        const double* u = pv_log.data();
        const double* f = fp.data();
        int mm = M;
        util::parallel_for(static_cast<std::size_t>(M), threads, [&](std::size_t k) {
            const double* fk = f + k;
            double acc = 0.0;
            for (int i = 0; i < mm; ++i) acc += u[i] * fk[i];
            rbuf[k] = acc;
        });
    }
};

CbcDriver::CbcDriver(int m, int s, int alpha, SpodWeightSpec spec, gf2::BitPolynomial modulus,
                     int threads, ScanPath path, CbcKernel kernel)
    : impl_(std::make_unique<Impl>(m, s, alpha, std::move(spec),
                                   modulus.bits == 0 ? gf2::smallest_irreducible(m) : modulus,
                                   threads, path, kernel)) {}

CbcDriver::~CbcDriver() = default;

int CbcDriver::total_steps() const { return impl_->alpha * impl_->s; }
int CbcDriver::steps_done() const { return impl_->step; }

CbcDriver::StepChoice CbcDriver::select(const std::vector<char>* excluded,
                                        long long* skipped) const {
    Impl& im = *impl_;
    if (im.step >= total_steps())
        throw Error(ErrorKind::validation, "cbc selection past the last sub-component");
    auto setup = im.prepare_scan(1.0);
    if (skipped) *skipped = 0;

    if (im.step == 0) {
        // Every candidate q permutes the full residue group, so the first
        // sub-component's criterion is the same for all q in exact
        // arithmetic; the tie-break mandates the smallest encoding.
        double r1 = 0.0;
        for (int i = 0; i < im.M; ++i)
            r1 += im.pv_log[static_cast<std::size_t>(i)] * im.fp[static_cast<std::size_t>(i)];
        return StepChoice{1u, setup.base + setup.coef * r1};
    }

    if (im.use_fft()) {
        im.correlation_fft();
    } else {
        im.correlation_direct();
    }
    auto value_at = [&](std::uint32_t q) {
        return setup.base + setup.coef * im.rbuf[static_cast<std::size_t>(im.tab.logt[q])];
    };
    std::uint32_t best_q = 0;
    double best_e = std::numeric_limits<double>::infinity();
    for (std::uint32_t q = 1; q <= static_cast<std::uint32_t>(im.M); ++q) {
        if (excluded && (*excluded)[q]) {
            if (skipped) ++*skipped;
            continue;
        }
        double e = value_at(q);
        if (e < best_e) {
            best_e = e;
            best_q = q;
        }
    }
    if (best_q == 0) throw CandidatesExhausted();
    // Second pass: smallest encoding within the tie window of the minimum.
    double cutoff = best_e + kTieWindow * std::max(std::abs(best_e),
                                                   std::numeric_limits<double>::min());
    for (std::uint32_t q = 1; q < best_q; ++q) {
        if (excluded && (*excluded)[q]) continue;
        double e = value_at(q);
        if (e <= cutoff) {
            best_q = q;
            best_e = e;
            break;
        }
    }
    return StepChoice{best_q, best_e};
}

std::vector<double> CbcDriver::candidate_values(double k_scale) const {
    Impl& im = *impl_;
    if (im.step >= total_steps())
        throw Error(ErrorKind::validation, "cbc evaluation past the last sub-component");
    auto setup = im.prepare_scan(k_scale);
    im.correlation_direct();
    std::vector<double> out(static_cast<std::size_t>(im.M));
    for (std::uint32_t q = 1; q <= static_cast<std::uint32_t>(im.M); ++q) {
        out[q - 1] = setup.base + setup.coef * im.rbuf[static_cast<std::size_t>(im.tab.logt[q])];
    }
    return out;
}

void CbcDriver::choose(std::uint32_t q) {
    Impl& im = *impl_;
    if (im.step >= total_steps())
        throw Error(ErrorKind::validation, "cbc choose past the last sub-component");
    if (q < 1 || q > static_cast<std::uint32_t>(im.M))
        throw Error(ErrorKind::validation, "cbc candidate encoding out of range");
    int k = im.tab.logt[q];
    util::parallel_for(static_cast<std::size_t>(im.M), im.threads, [&](std::size_t i) {
        std::uint32_t n_enc = im.tab.expt[i];
        im.partial[n_enc] *= 1.0 + im.fp[i + static_cast<std::size_t>(k)];
    });
    im.partial[0] *= 1.0 + im.phi0;
    im.chosen.push_back(gf2::BitPolynomial{q});
    ++im.step;
    if (im.step % im.alpha == 0) im.fold_coordinate(im.step / im.alpha);
}

double CbcDriver::full_criterion() const {
    Impl& im = *impl_;
    if (im.step % im.alpha != 0)
        throw Error(ErrorKind::validation, "criterion requested mid-coordinate");
    for (int n = 0; n < im.N; ++n) {
        const double* row = &im.state[static_cast<std::size_t>(n) * im.stride];
        double t = 0.0;
        for (int l = 1; l <= im.lmax; ++l) t += row[l];
        im.scratch[static_cast<std::size_t>(n)] = t;
    }
    return util::pairwise_sum(im.scratch) / static_cast<double>(im.N);
}

std::vector<gf2::BitPolynomial> CbcDriver::chosen() const { return impl_->chosen; }

namespace {

double rule_objective(const plat::InterlacedRule& rule, const SpodWeightSpec& spec,
                      CbcKernel kernel) {
    plat::validate(rule);
    if (spec.s() < rule.s)
        throw Error(ErrorKind::validation, "weight spec shorter than rule dimension");
    CbcDriver driver(rule.m, rule.s, rule.alpha, spec.truncated(rule.s), rule.modulus, 1,
                     ScanPath::automatic, kernel);
    for (const auto& g : rule.generators) {
        driver.choose(static_cast<std::uint32_t>(g.bits));
    }
    return driver.full_criterion();
}

} // namespace

double criterion(const plat::InterlacedRule& rule, const SpodWeightSpec& spec) {
    return rule_objective(rule, spec, CbcKernel::first_digit);
}

double construction_objective(const plat::InterlacedRule& rule, const SpodWeightSpec& spec) {
    return rule_objective(rule, spec, CbcKernel::depth_weighted);
}

CbcResult cbc_construct(int m, int s, int alpha, const SpodWeightSpec& spec, bool prune,
                        gf2::BitPolynomial modulus, int threads, ScanPath path) {
    if (m < 1 || m > 20) throw Error(ErrorKind::validation, "cbc requires 1 <= m <= 20");
    long long candidates = (1ll << m) - 1;
    if (prune && static_cast<long long>(alpha) * s > candidates) throw CandidatesExhausted();

    gf2::BitPolynomial P = modulus.bits == 0 ? gf2::smallest_irreducible(m) : modulus;
    CbcDriver driver(m, s, alpha, spec.truncated(std::min<int>(s, spec.s())), P, threads, path,
                     CbcKernel::depth_weighted);

    std::vector<char> excluded(static_cast<std::size_t>(candidates) + 1, 0);
    CbcResult result;
    result.rule.m = m;
    result.rule.alpha = alpha;
    result.rule.s = s;
    result.rule.modulus = P;
    for (int c = 0; c < alpha * s; ++c) {
        long long skipped = 0;
        auto pick = driver.select(prune ? &excluded : nullptr, &skipped);
        result.criterion_history.push_back(pick.criterion);
        result.pruned += skipped;
        if (prune) excluded[pick.q] = 1;
        driver.choose(pick.q);
    }
    result.rule.generators = driver.chosen();
    plat::validate(result.rule);
    return result;
}

double qmc_integrate(const plat::PointSet& pts,
                     const std::function<double(std::span<const double>)>& integrand) {
    std::vector<double> vals(static_cast<std::size_t>(pts.rows));
    std::vector<double> row(static_cast<std::size_t>(pts.dims));
    double shift = pts.centered ? 0.0 : 0.5;
    for (int n = 0; n < pts.rows; ++n) {
        for (int j = 1; j <= pts.dims; ++j) {
            row[static_cast<std::size_t>(j - 1)] = pts.value(n, j) - shift;
        }
        vals[static_cast<std::size_t>(n)] = integrand(row);
    }
    return util::pairwise_mean(vals);
}

} // namespace hoqmc::cbc
