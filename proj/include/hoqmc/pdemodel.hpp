#pragma once

#include <functional>
#include <span>
#include <vector>

namespace hoqmc::pde {

// ---------------------------------------------------------------------------
// Parametric diffusion coefficient on the unit square
//
//   a(y)(x) = 1 + sum_{j=1}^{s} y_j * lambda_j * sin(k1_j pi x1) * sin(k2_j pi x2)
//
// with lambda_j = (k1_j^2 + k2_j^2)^{-2} and the wave-number pairs (k1, k2)
// enumerated in increasing order of k1^2 + k2^2, ties broken by smaller k1.
// Parameters y live in [-1/2, 1/2]^s, so a is uniformly elliptic:
// sum_j lambda_j / 2 < 0.4.
// ---------------------------------------------------------------------------

struct WavePair {
    int k1 = 0;
    int k2 = 0;
};

// 1-based index into the (sum ascending, k1 ascending) enumeration:
// j=1 -> (1,1), j=2 -> (1,2), j=3 -> (2,1), j=4 -> (2,2), ...
WavePair index_to_pair(int j);

// lambda_j = (k1^2 + k2^2)^{-2} for the j-th pair.
double lambda_of(int j);

// Pointwise coefficient value with truncation dimension s = y.size().
double eval_coeff(std::span<const double> y, double x1, double x2);

// Weight sequences attached to this coefficient model: beta_j = lambda_j for
// single-level rules, beta_j = lambda_j * pi * max(k1_j, k2_j) for multi-level
// rules (the extra factor majorizes one spatial derivative of mode j).
std::vector<double> sl_beta(int s);
std::vector<double> ml_beta(int s);

// ---------------------------------------------------------------------------
// Triangulated mesh of the unit square at refinement `level`: a uniform grid
// of squares_per_side = 2^(level+1) squares per direction, each split by the
// lower-left -> upper-right diagonal. Mesh width h = 2^-(level+1); interior
// vertices form an n x n grid with n = squares_per_side - 1.
// ---------------------------------------------------------------------------

struct TriMesh {
    int level = 0;
    int squares_per_side = 0;
    int interior_per_side = 0;
    double h = 0.0;

    explicit TriMesh(int level);

    // Full nodal grid including the Dirichlet boundary:
    // (squares_per_side+1)^2 vertices, index gi + gj*(squares_per_side+1).
    int node_count() const { return (squares_per_side + 1) * (squares_per_side + 1); }
    int node_index(int gi, int gj) const { return gi + gj * (squares_per_side + 1); }
};

// Element-wise coefficient samples: one value per triangle, taken at its
// centroid. Squares are indexed i + j*squares_per_side; `lower` holds the
// triangle below the diagonal, `upper` the one above.
struct CentroidField {
    int squares_per_side = 0;
    std::vector<double> lower;
    std::vector<double> upper;
};

// Sample an arbitrary coefficient at every triangle centroid.
CentroidField coeff_on_centroids(const TriMesh& mesh,
                                 const std::function<double(double, double)>& coeff);

// Same field for the sine expansion above, evaluated by separating the
// tensor-product structure (cost O(K * squares^2) instead of
// O(s * squares^2) pointwise evaluations, K = largest wave number).
CentroidField coeff_on_centroids(const TriMesh& mesh, std::span<const double> y);

// ---------------------------------------------------------------------------
// P1 Galerkin discretization. On this mesh the bilinear form with
// triangle-wise constant coefficient couples only axis neighbours, so the
// stiffness matrix is stored as a 5-point stencil over interior vertices:
// diag[idx], east[idx] (coupling idx <-> idx+1) and north[idx]
// (coupling idx <-> idx+n), idx = i + j*n row-major.
// ---------------------------------------------------------------------------

struct SparseSystem {
    int n = 0;    // interior vertices per direction
    double h = 0.0;
    std::vector<double> diag;
    std::vector<double> east;
    std::vector<double> north;
    std::vector<double> load;

    void matvec(const double* x, double* y) const;
};

// Stiffness and load for the Dirichlet problem -div(a grad u) = f, u|bd = 0,
// with the default right-hand side f(x) = 100*x1. The load uses the vertex
// quadrature |T|/12 * (2 f(v) + f(w1) + f(w2)), which is exact for affine f.
SparseSystem assemble(const TriMesh& mesh, const CentroidField& coeff);
SparseSystem assemble(const TriMesh& mesh,
                      const std::function<double(double, double)>& coeff);
SparseSystem assemble(const TriMesh& mesh, const CentroidField& coeff,
                      const std::function<double(double, double)>& f);

// Conjugate gradient solve preconditioned by the exact constant-coefficient
// operator (inverted via fast diagonalization with discrete sine transforms).
// Stops at relative residual 1e-10. Throws ZeroPivot if the assembled
// diagonal is not strictly positive, NoConvergence after 10 * n^2 iterations.
std::vector<double> solve_interior(const SparseSystem& system);

// Full nodal solution vector (interior solve embedded into the grid with the
// zero Dirichlet boundary values filled in).
std::vector<double> solve(const SparseSystem& system);

// Linear functional G(u) = integral of u over the unit square, evaluated
// exactly for the P1 interpolant given by the full nodal vector `u_full`.
double functional_G(std::span<const double> u_full, const TriMesh& mesh);

// Composition: coefficient from the first s entries of y, assemble, solve,
// integrate. Pure in its arguments; safe to call concurrently.
double solve_G(std::span<const double> y, int level, int s);

} // namespace hoqmc::pde
