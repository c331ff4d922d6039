#include "hoqmc/pdemodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>

#include <fftw3.h>

#include "hoqmc/errors.hpp"
#include "hoqmc/util.hpp"

namespace hoqmc::pde {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kCgTolerance = 1e-10;
constexpr int kMaxLevel = 12;

std::mutex& pair_mutex() {
    static std::mutex m;
    return m;
}

// Enumerating the box [1,K]^2 and sorting by (k1^2+k2^2, k1) yields the
// correct global order for every pair with k1^2+k2^2 <= K^2+1: any pair
// outside the box has a component >= K+1 and hence a strictly larger sum.
std::vector<WavePair>& pair_store() {
    static std::vector<WavePair> store;
    return store;
}

void ensure_pairs_locked(int upto) {
    auto& store = pair_store();
    if (static_cast<int>(store.size()) >= upto) return;
    int box = 4;
    while (true) {
        std::vector<WavePair> pairs;
        pairs.reserve(static_cast<std::size_t>(box) * box);
        for (int k1 = 1; k1 <= box; ++k1)
            for (int k2 = 1; k2 <= box; ++k2) pairs.push_back({k1, k2});
        std::sort(pairs.begin(), pairs.end(), [](const WavePair& a, const WavePair& b) {
            int sa = a.k1 * a.k1 + a.k2 * a.k2;
            int sb = b.k1 * b.k1 + b.k2 * b.k2;
            if (sa != sb) return sa < sb;
            return a.k1 < b.k1;
        });
        int complete_sum = box * box + 1;
        std::size_t valid = 0;
        while (valid < pairs.size() &&
               pairs[valid].k1 * pairs[valid].k1 + pairs[valid].k2 * pairs[valid].k2 <=
                   complete_sum) {
            ++valid;
        }
        if (valid >= static_cast<std::size_t>(upto)) {
            pairs.resize(valid);
            store = std::move(pairs);
            return;
        }
        box *= 2;
    }
}

std::vector<WavePair> pairs_prefix(int s) {
    std::lock_guard<std::mutex> lock(pair_mutex());
    ensure_pairs_locked(s);
    return {pair_store().begin(), pair_store().begin() + s};
}

int interior_index(int gi, int gj, int n) {
    if (gi < 1 || gi > n || gj < 1 || gj > n) return -1;
    return (gi - 1) + (gj - 1) * n;
}

// Workspace for the fast-diagonalization preconditioner: an in-place 2-D
// type-I discrete sine transform plus the inverse eigenvalues of the
// constant-coefficient stiffness stencil (diag 4, axis neighbours -1).
// Applying the transform twice multiplies by (2(n+1))^2; that factor is
// folded into inv_eig.
struct DstWorkspace {
    int n = 0;
    double* buf = nullptr;
    fftw_plan plan = nullptr;
    std::vector<double> inv_eig;

    DstWorkspace(const DstWorkspace&) = delete;
    DstWorkspace& operator=(const DstWorkspace&) = delete;
    DstWorkspace() = default;

    ~DstWorkspace() {
        std::lock_guard<std::mutex> lock(util::fftw_planner_mutex());
        if (plan != nullptr) fftw_destroy_plan(plan);
        if (buf != nullptr) fftw_free(buf);
    }
};

DstWorkspace& dst_workspace(int n) {
    thread_local std::map<int, std::unique_ptr<DstWorkspace>> cache;
    auto& slot = cache[n];
    if (!slot) {
        auto ws = std::make_unique<DstWorkspace>();
        ws->n = n;
        std::size_t n2 = static_cast<std::size_t>(n) * n;
        ws->buf = static_cast<double*>(fftw_malloc(sizeof(double) * n2));
        if (ws->buf == nullptr) throw Error(ErrorKind::numerical, "out of memory in DST workspace");
        {
            std::lock_guard<std::mutex> lock(util::fftw_planner_mutex());
            ws->plan = fftw_plan_r2r_2d(n, n, ws->buf, ws->buf, FFTW_RODFT00, FFTW_RODFT00,
                                        FFTW_ESTIMATE);
        }
        if (ws->plan == nullptr) throw Error(ErrorKind::numerical, "failed to plan DST");
        std::vector<double> cosv(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) cosv[k] = std::cos((k + 1) * kPi / (n + 1));
        ws->inv_eig.resize(n2);
        double scale = 2.0 * (n + 1);
        scale = 1.0 / (scale * scale);
        for (int kq = 0; kq < n; ++kq) {
            for (int kp = 0; kp < n; ++kp) {
                double lam = 4.0 - 2.0 * cosv[kp] - 2.0 * cosv[kq];
                ws->inv_eig[static_cast<std::size_t>(kq) * n + kp] = scale / lam;
            }
        }
        slot = std::move(ws);
    }
    return *slot;
}

void apply_preconditioner(DstWorkspace& ws, const std::vector<double>& r, std::vector<double>& z) {
    std::size_t n2 = r.size();
    std::copy(r.begin(), r.end(), ws.buf);
    fftw_execute(ws.plan);
    for (std::size_t k = 0; k < n2; ++k) ws.buf[k] *= ws.inv_eig[k];
    fftw_execute(ws.plan);
    std::copy(ws.buf, ws.buf + n2, z.begin());
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

SparseSystem assemble_core(const TriMesh& mesh, const CentroidField& coeff,
                           const std::function<double(double, double)>* f) {
    if (coeff.squares_per_side != mesh.squares_per_side ||
        coeff.lower.size() != coeff.upper.size() ||
        static_cast<int>(coeff.lower.size()) != mesh.squares_per_side * mesh.squares_per_side) {
        throw Error(ErrorKind::validation, "centroid field does not match mesh");
    }
    int squares = mesh.squares_per_side;
    int n = mesh.interior_per_side;
    double h = mesh.h;
    SparseSystem sys;
    sys.n = n;
    sys.h = h;
    std::size_t n2 = static_cast<std::size_t>(n) * n;
    sys.diag.assign(n2, 0.0);
    sys.east.assign(n2, 0.0);
    sys.north.assign(n2, 0.0);
    sys.load.assign(n2, 0.0);

    // Right-hand side values at all grid vertices; default f(x) = 100*x1.
    std::vector<double> fv(static_cast<std::size_t>(squares + 1) * (squares + 1));
    for (int gj = 0; gj <= squares; ++gj) {
        for (int gi = 0; gi <= squares; ++gi) {
            double x1 = gi * h;
            fv[static_cast<std::size_t>(gj) * (squares + 1) + gi] =
                f != nullptr ? (*f)(x1, gj * h) : 100.0 * x1;
        }
    }

    double quad = h * h / 24.0;  // |T| / 12 with |T| = h^2/2
    for (int j = 0; j < squares; ++j) {
        for (int i = 0; i < squares; ++i) {
            double a_lo = coeff.lower[static_cast<std::size_t>(j) * squares + i];
            double a_up = coeff.upper[static_cast<std::size_t>(j) * squares + i];
            int i00 = interior_index(i, j, n);
            int i10 = interior_index(i + 1, j, n);
            int i01 = interior_index(i, j + 1, n);
            int i11 = interior_index(i + 1, j + 1, n);

            if (i00 >= 0) sys.diag[i00] += 0.5 * (a_lo + a_up);
            if (i10 >= 0) sys.diag[i10] += a_lo;
            if (i11 >= 0) sys.diag[i11] += 0.5 * (a_lo + a_up);
            if (i01 >= 0) sys.diag[i01] += a_up;
            if (i00 >= 0 && i10 >= 0) sys.east[i00] -= 0.5 * a_lo;
            if (i10 >= 0 && i11 >= 0) sys.north[i10] -= 0.5 * a_lo;
            if (i00 >= 0 && i01 >= 0) sys.north[i00] -= 0.5 * a_up;
            if (i01 >= 0 && i11 >= 0) sys.east[i01] -= 0.5 * a_up;

            std::size_t row0 = static_cast<std::size_t>(j) * (squares + 1);
            std::size_t row1 = row0 + (squares + 1);
            double f00 = fv[row0 + i], f10 = fv[row0 + i + 1];
            double f01 = fv[row1 + i], f11 = fv[row1 + i + 1];
            // lower triangle (v00, v10, v11)
            if (i00 >= 0) sys.load[i00] += quad * (2.0 * f00 + f10 + f11);
            if (i10 >= 0) sys.load[i10] += quad * (2.0 * f10 + f00 + f11);
            if (i11 >= 0) sys.load[i11] += quad * (2.0 * f11 + f00 + f10);
            // upper triangle (v00, v11, v01)
            if (i00 >= 0) sys.load[i00] += quad * (2.0 * f00 + f11 + f01);
            if (i11 >= 0) sys.load[i11] += quad * (2.0 * f11 + f00 + f01);
            if (i01 >= 0) sys.load[i01] += quad * (2.0 * f01 + f00 + f11);
        }
    }
    return sys;
}

} // namespace

WavePair index_to_pair(int j) {
    if (j < 1) throw Error(ErrorKind::validation, "pair index must be >= 1");
    std::lock_guard<std::mutex> lock(pair_mutex());
    ensure_pairs_locked(j);
    return pair_store()[j - 1];
}

double lambda_of(int j) {
    WavePair p = index_to_pair(j);
    double sum = static_cast<double>(p.k1) * p.k1 + static_cast<double>(p.k2) * p.k2;
    return 1.0 / (sum * sum);
}

double eval_coeff(std::span<const double> y, double x1, double x2) {
    int s = static_cast<int>(y.size());
    std::vector<WavePair> pairs = pairs_prefix(s);
    double acc = 1.0;
    for (int j = 1; j <= s; ++j) {
        const WavePair& p = pairs[j - 1];
        double sum = static_cast<double>(p.k1) * p.k1 + static_cast<double>(p.k2) * p.k2;
        acc += y[j - 1] / (sum * sum) * std::sin(p.k1 * kPi * x1) * std::sin(p.k2 * kPi * x2);
    }
    return acc;
}

std::vector<double> sl_beta(int s) {
    if (s < 0) throw Error(ErrorKind::validation, "dimension must be >= 0");
    std::vector<double> beta(static_cast<std::size_t>(s));
    for (int j = 1; j <= s; ++j) beta[j - 1] = lambda_of(j);
    return beta;
}

std::vector<double> ml_beta(int s) {
    if (s < 0) throw Error(ErrorKind::validation, "dimension must be >= 0");
    std::vector<WavePair> pairs = pairs_prefix(s);
    std::vector<double> beta(static_cast<std::size_t>(s));
    for (int j = 1; j <= s; ++j) {
        const WavePair& p = pairs[j - 1];
        double sum = static_cast<double>(p.k1) * p.k1 + static_cast<double>(p.k2) * p.k2;
        beta[j - 1] = kPi * std::max(p.k1, p.k2) / (sum * sum);
    }
    return beta;
}

TriMesh::TriMesh(int lvl) {
    if (lvl < 0 || lvl > kMaxLevel) {
        throw Error(ErrorKind::validation, "mesh level must be in [0, 12]");
    }
    level = lvl;
    squares_per_side = 1 << (lvl + 1);
    interior_per_side = squares_per_side - 1;
    h = std::ldexp(1.0, -(lvl + 1));
}

CentroidField coeff_on_centroids(const TriMesh& mesh,
                                 const std::function<double(double, double)>& coeff) {
    int squares = mesh.squares_per_side;
    double h = mesh.h;
    CentroidField field;
    field.squares_per_side = squares;
    field.lower.resize(static_cast<std::size_t>(squares) * squares);
    field.upper.resize(field.lower.size());
    for (int j = 0; j < squares; ++j) {
        for (int i = 0; i < squares; ++i) {
            std::size_t idx = static_cast<std::size_t>(j) * squares + i;
            field.lower[idx] = coeff((i + 2.0 / 3.0) * h, (j + 1.0 / 3.0) * h);
            field.upper[idx] = coeff((i + 1.0 / 3.0) * h, (j + 2.0 / 3.0) * h);
        }
    }
    return field;
}

CentroidField coeff_on_centroids(const TriMesh& mesh, std::span<const double> y) {
    int s = static_cast<int>(y.size());
    int squares = mesh.squares_per_side;
    double h = mesh.h;
    CentroidField field;
    field.squares_per_side = squares;
    field.lower.assign(static_cast<std::size_t>(squares) * squares, 1.0);
    field.upper.assign(field.lower.size(), 1.0);
    if (s == 0) return field;

    std::vector<WavePair> pairs = pairs_prefix(s);
    int kmax = 0;
    for (const WavePair& p : pairs) kmax = std::max({kmax, p.k1, p.k2});

    // Mode-weight matrix Z[k1][k2] = y_j * lambda_j for the pair (k1, k2).
    std::vector<double> z(static_cast<std::size_t>(kmax) * kmax, 0.0);
    for (int j = 1; j <= s; ++j) {
        const WavePair& p = pairs[j - 1];
        double sum = static_cast<double>(p.k1) * p.k1 + static_cast<double>(p.k2) * p.k2;
        z[static_cast<std::size_t>(p.k1 - 1) * kmax + (p.k2 - 1)] += y[j - 1] / (sum * sum);
    }

    // Separated sine factors sampled at centroid abscissae. Layout: sample
    // index major, wave number minor, so the contractions below run over
    // contiguous rows.
    auto sine_table = [&](double offset) {
        std::vector<double> t(static_cast<std::size_t>(squares) * kmax);
        for (int i = 0; i < squares; ++i) {
            double x = (i + offset) * h;
            for (int k = 0; k < kmax; ++k) {
                t[static_cast<std::size_t>(i) * kmax + k] = std::sin((k + 1) * kPi * x);
            }
        }
        return t;
    };
    std::vector<double> sx_third = sine_table(1.0 / 3.0);
    std::vector<double> sx_two_thirds = sine_table(2.0 / 3.0);

    auto contract = [&](const std::vector<double>& sx, const std::vector<double>& sy,
                        std::vector<double>& out) {
        // t[j][k1] = sum_k2 Z[k1][k2] * sy[j][k2], then
        // out[i + j*squares] = 1 + sum_k1 sx[i][k1] * t[j][k1].
        std::vector<double> t(static_cast<std::size_t>(squares) * kmax);
        for (int j = 0; j < squares; ++j) {
            const double* syr = &sy[static_cast<std::size_t>(j) * kmax];
            double* tr = &t[static_cast<std::size_t>(j) * kmax];
            for (int k1 = 0; k1 < kmax; ++k1) {
                const double* zr = &z[static_cast<std::size_t>(k1) * kmax];
                double acc = 0.0;
                for (int k2 = 0; k2 < kmax; ++k2) acc += zr[k2] * syr[k2];
                tr[k1] = acc;
            }
        }
        for (int j = 0; j < squares; ++j) {
            const double* tr = &t[static_cast<std::size_t>(j) * kmax];
            double* row = &out[static_cast<std::size_t>(j) * squares];
            for (int i = 0; i < squares; ++i) {
                const double* sxr = &sx[static_cast<std::size_t>(i) * kmax];
                double acc = 0.0;
                for (int k = 0; k < kmax; ++k) acc += sxr[k] * tr[k];
                row[i] += acc;
            }
        }
    };
    // lower centroid: (i + 2/3, j + 1/3) * h; upper: (i + 1/3, j + 2/3) * h
    contract(sx_two_thirds, sx_third, field.lower);
    contract(sx_third, sx_two_thirds, field.upper);
    return field;
}

void SparseSystem::matvec(const double* x, double* y) const {
    for (int j = 0; j < n; ++j) {
        std::size_t base = static_cast<std::size_t>(j) * n;
        for (int i = 0; i < n; ++i) {
            std::size_t idx = base + i;
            double v = diag[idx] * x[idx];
            if (i + 1 < n) v += east[idx] * x[idx + 1];
            if (i > 0) v += east[idx - 1] * x[idx - 1];
            if (j + 1 < n) v += north[idx] * x[idx + n];
            if (j > 0) v += north[idx - n] * x[idx - n];
            y[idx] = v;
        }
    }
}

SparseSystem assemble(const TriMesh& mesh, const CentroidField& coeff) {
    return assemble_core(mesh, coeff, nullptr);
}

SparseSystem assemble(const TriMesh& mesh, const std::function<double(double, double)>& coeff) {
    return assemble_core(mesh, coeff_on_centroids(mesh, coeff), nullptr);
}

SparseSystem assemble(const TriMesh& mesh, const CentroidField& coeff,
                      const std::function<double(double, double)>& f) {
    return assemble_core(mesh, coeff, &f);
}

std::vector<double> solve_interior(const SparseSystem& system) {
    int n = system.n;
    std::size_t n2 = static_cast<std::size_t>(n) * n;
    if (n < 1 || system.diag.size() != n2 || system.east.size() != n2 ||
        system.north.size() != n2 || system.load.size() != n2) {
        throw Error(ErrorKind::validation, "malformed sparse system");
    }
    for (std::size_t i = 0; i < n2; ++i) {
        if (!(system.diag[i] > 0.0)) {
            throw ZeroPivot("nonpositive diagonal entry in stiffness matrix");
        }
    }
    std::vector<double> x(n2, 0.0);
    double bnorm = std::sqrt(dot(system.load, system.load));
    if (bnorm == 0.0) return x;

    DstWorkspace& ws = dst_workspace(n);
    std::vector<double> r = system.load;
    std::vector<double> z(n2), p(n2), q(n2);
    apply_preconditioner(ws, r, z);
    p = z;
    double rz = dot(r, z);
    long long max_iter = 10ll * static_cast<long long>(n2);
    for (long long it = 0; it < max_iter; ++it) {
        system.matvec(p.data(), q.data());
        double pq = dot(p, q);
        if (!(pq > 0.0)) throw NoConvergence("conjugate gradient breakdown");
        double alpha = rz / pq;
        for (std::size_t i = 0; i < n2; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if (std::sqrt(dot(r, r)) <= kCgTolerance * bnorm) return x;
        apply_preconditioner(ws, r, z);
        double rz_next = dot(r, z);
        double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < n2; ++i) p[i] = z[i] + beta * p[i];
    }
    throw NoConvergence("conjugate gradient did not reach tolerance 1e-10");
}

std::vector<double> solve(const SparseSystem& system) {
    std::vector<double> interior = solve_interior(system);
    int n = system.n;
    int side = n + 2;
    std::vector<double> full(static_cast<std::size_t>(side) * side, 0.0);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            full[static_cast<std::size_t>(j + 1) * side + (i + 1)] =
                interior[static_cast<std::size_t>(j) * n + i];
        }
    }
    return full;
}

double functional_G(std::span<const double> u_full, const TriMesh& mesh) {
    if (static_cast<int>(u_full.size()) != mesh.node_count()) {
        throw Error(ErrorKind::validation, "nodal vector does not match mesh");
    }
    int squares = mesh.squares_per_side;
    int side = squares + 1;
    double w = mesh.h * mesh.h / 6.0;
    std::vector<double> contrib(static_cast<std::size_t>(squares) * squares);
    for (int j = 0; j < squares; ++j) {
        std::size_t row0 = static_cast<std::size_t>(j) * side;
        std::size_t row1 = row0 + side;
        for (int i = 0; i < squares; ++i) {
            double u00 = u_full[row0 + i], u10 = u_full[row0 + i + 1];
            double u01 = u_full[row1 + i], u11 = u_full[row1 + i + 1];
            contrib[static_cast<std::size_t>(j) * squares + i] =
                w * (2.0 * u00 + u10 + 2.0 * u11 + u01);
        }
    }
    return util::pairwise_sum(contrib);
}

double solve_G(std::span<const double> y, int level, int s) {
    if (s < 0 || static_cast<std::size_t>(s) > y.size()) {
        throw Error(ErrorKind::validation, "truncation dimension exceeds parameter vector");
    }
    TriMesh mesh(level);
    CentroidField field = coeff_on_centroids(mesh, y.first(static_cast<std::size_t>(s)));
    SparseSystem sys = assemble(mesh, field);
    std::vector<double> u = solve_interior(sys);
    // G equals h^2 * sum of interior nodal values: every interior vertex
    // belongs to exactly six triangles of area h^2/2, and boundary values
    // vanish.
    return mesh.h * mesh.h * util::pairwise_sum(u);
}

} // namespace hoqmc::pde
