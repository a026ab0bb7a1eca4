#pragma once

// P1 finite elements for div(A grad u) = f on simplicial meshes: assembly,
// Jacobi-preconditioned CG, Dirichlet and Poisson solves, energies and ball averages.

#include "conelab/coefficient.hpp"
#include "conelab/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <vector>

namespace conelab {

/// Compressed sparse row matrix with sorted column indices.
struct CsrMatrix {
    std::size_t n = 0;
    std::vector<std::size_t> rowptr;
    std::vector<int> col;
    std::vector<double> val;

    void multiply(const std::vector<double>& x, std::vector<double>& y) const {
        y.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t k = rowptr[i]; k < rowptr[i + 1]; ++k) s += val[k] * x[col[k]];
            y[i] = s;
        }
    }

    double at(std::size_t i, std::size_t j) const {
        auto b = col.begin() + static_cast<std::ptrdiff_t>(rowptr[i]);
        auto e = col.begin() + static_cast<std::ptrdiff_t>(rowptr[i + 1]);
        auto it = std::lower_bound(b, e, static_cast<int>(j));
        return (it != e && *it == static_cast<int>(j)) ? val[static_cast<std::size_t>(it - col.begin())] : 0.0;
    }

    std::vector<double> diagonal() const {
        std::vector<double> d(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) d[i] = at(i, i);
        return d;
    }

    /// max |K_ij - K_ji| / max |K_ij|.
    double symmetry_residual() const {
        double worst = 0.0;
        double scale = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = rowptr[i]; k < rowptr[i + 1]; ++k) {
                scale = std::max(scale, std::abs(val[k]));
                worst = std::max(worst, std::abs(val[k] - at(static_cast<std::size_t>(col[k]), i)));
            }
        return scale > 0 ? worst / scale : 0.0;
    }

    std::size_t nnz() const noexcept { return val.size(); }
};

/// Barycentric quadrature on the reference simplex avoiding the vertices;
/// weights sum to one (multiply by the cell volume).
struct CellRule {
    std::vector<std::vector<double>> bary;
    std::vector<double> weights;
};

inline const CellRule& cell_rule(int dim) {
    static const CellRule rules[3] = {
        [] {
            const double a = 0.5 - 0.5 / std::sqrt(3.0);
            return CellRule{{{1 - a, a}, {a, 1 - a}}, {0.5, 0.5}};
        }(),
        CellRule{{{2.0 / 3, 1.0 / 6, 1.0 / 6}, {1.0 / 6, 2.0 / 3, 1.0 / 6}, {1.0 / 6, 1.0 / 6, 2.0 / 3}},
                 {1.0 / 3, 1.0 / 3, 1.0 / 3}},
        [] {
            const double a = 0.5854101966249685;
            const double b = 0.1381966011250105;
            return CellRule{{{a, b, b, b}, {b, a, b, b}, {b, b, a, b}, {b, b, b, a}}, {0.25, 0.25, 0.25, 0.25}};
        }(),
    };
    if (dim < 1 || dim > 3) throw InvalidArgument("cell_rule: dimension must be 1, 2 or 3");
    return rules[dim - 1];
}

/// Gradients of the barycentric functions (columns) and the volume of a cell.
struct CellGeometry {
    Matrix grads;  ///< dim x (dim + 1)
    double volume = 0.0;
};

inline CellGeometry cell_geometry(const Mesh& m, std::size_t c) {
    const int n = m.dim;
    Matrix J(n, n);
    const int i0 = m.cell_node(c, 0);
    for (int k = 1; k <= n; ++k)
        for (int d = 0; d < n; ++d) J(d, k - 1) = m.coords[m.cell_node(c, k) * n + d] - m.coords[i0 * n + d];
    const double det = J.determinant();
    if (!(std::abs(det) > 0.0)) throw DegenerateError("degenerate mesh cell", m.node(i0));
    const Matrix Jinv = J.inverse();
    CellGeometry g;
    g.grads.resize(n, n + 1);
    for (int k = 1; k <= n; ++k) g.grads.col(k) = Jinv.row(k - 1).transpose();
    g.grads.col(0) = -g.grads.rightCols(n).rowwise().sum();
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    g.volume = std::abs(det) / f;
    return g;
}

inline Point cell_point(const Mesh& m, std::size_t c, const std::vector<double>& bary) {
    Point x = Point::Zero(m.dim);
    for (int k = 0; k <= m.dim; ++k) x += bary[k] * m.node(m.cell_node(c, k));
    return x;
}

/// Cell average of A over the vertex-avoiding rule.
inline Matrix cell_coefficient(const CoefficientField& A, const Mesh& m, std::size_t c) {
    const CellRule& rule = cell_rule(m.dim);
    Matrix acc = Matrix::Zero(m.dim, m.dim);
    for (std::size_t q = 0; q < rule.weights.size(); ++q) acc += rule.weights[q] * A(cell_point(m, c, rule.bary[q]));
    return acc;
}

/// Stiffness matrix K_ij = sum_cells vol * grad phi_i^T A_cell grad phi_j.
inline CsrMatrix assemble(const CoefficientField& A, const Mesh& m) {
    if (A.dimension() != m.dim) throw InvalidArgument("assemble: coefficient and mesh dimensions differ");
    const std::size_t nn = m.num_nodes();
    const int v = m.verts();
    std::vector<std::vector<int>> adj(nn);
    for (std::size_t c = 0; c < m.num_cells(); ++c)
        for (int a = 0; a < v; ++a) {
            auto& row = adj[m.cell_node(c, a)];
            for (int b = 0; b < v; ++b) {
                const int j = m.cell_node(c, b);
                if (std::find(row.begin(), row.end(), j) == row.end()) row.push_back(j);
            }
        }
    CsrMatrix K;
    K.n = nn;
    K.rowptr.assign(nn + 1, 0);
    for (std::size_t i = 0; i < nn; ++i) K.rowptr[i + 1] = K.rowptr[i] + adj[i].size();
    K.col.resize(K.rowptr[nn]);
    for (std::size_t i = 0; i < nn; ++i) {
        std::sort(adj[i].begin(), adj[i].end());
        std::copy(adj[i].begin(), adj[i].end(), K.col.begin() + static_cast<std::ptrdiff_t>(K.rowptr[i]));
        std::vector<int>().swap(adj[i]);
    }
    K.val.assign(K.col.size(), 0.0);
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
        const CellGeometry g = cell_geometry(m, c);
        const Matrix a = cell_coefficient(A, m, c);
        const Matrix ke = g.volume * (g.grads.transpose() * a * g.grads);
        for (int p = 0; p < v; ++p) {
            const std::size_t i = static_cast<std::size_t>(m.cell_node(c, p));
            for (int q = 0; q < v; ++q) {
                const int j = m.cell_node(c, q);
                auto b = K.col.begin() + static_cast<std::ptrdiff_t>(K.rowptr[i]);
                auto e = K.col.begin() + static_cast<std::ptrdiff_t>(K.rowptr[i + 1]);
                K.val[static_cast<std::size_t>(std::lower_bound(b, e, j) - K.col.begin())] += ke(p, q);
            }
        }
    }
    return K;
}

/// Load vector F_i = int f phi_i.
inline std::vector<double> assemble_load(const std::function<double(const Point&)>& f, const Mesh& m) {
    std::vector<double> F(m.num_nodes(), 0.0);
    const CellRule& rule = cell_rule(m.dim);
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
        const double vol = m.cell_volume(c);
        for (std::size_t q = 0; q < rule.weights.size(); ++q) {
            const double fq = f(cell_point(m, c, rule.bary[q])) * rule.weights[q] * vol;
            for (int k = 0; k <= m.dim; ++k) F[m.cell_node(c, k)] += fq * rule.bary[q][k];
        }
    }
    return F;
}

struct SolveStats {
    int iterations = 0;
    double residual = 0.0;  ///< final relative residual
};

struct SolverOptions {
    double rtol = 1e-10;
    int max_iterations = 0;  ///< 0: 10 * unknowns + 100
};

/// Jacobi-preconditioned CG for K x = b on the free entries; entries with
/// fixed[i] != 0 keep their value in x.
inline SolveStats pcg(const CsrMatrix& K, const std::vector<double>& b, std::vector<double>& x,
                      const std::vector<std::uint8_t>& fixed, const SolverOptions& opt = {}) {
    const std::size_t n = K.n;
    if (b.size() != n || x.size() != n || fixed.size() != n) throw InvalidArgument("pcg: size mismatch");
    const std::vector<double> diag = K.diagonal();
    std::size_t free_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (fixed[i]) continue;
        ++free_count;
        if (!(diag[i] > 0.0))
            throw SolverError("singular system: free node " + std::to_string(i) +
                                  " has a nonpositive diagonal (its indicator is a null vector)",
                              0.0, 0);
    }
    std::vector<double> r(n), z(n), p(n, 0.0), q(n);
    K.multiply(x, q);
    double r0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = fixed[i] ? 0.0 : b[i] - q[i];
        r0 += r[i] * r[i];
    }
    r0 = std::sqrt(r0);
    SolveStats st;
    if (free_count == 0 || r0 == 0.0) return st;
    const int maxit = opt.max_iterations > 0 ? opt.max_iterations : static_cast<int>(10 * free_count + 100);
    double rz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = fixed[i] ? 0.0 : r[i] / diag[i];
        rz += r[i] * z[i];
    }
    p = z;
    for (int it = 1; it <= maxit; ++it) {
        K.multiply(p, q);
        double pq = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!fixed[i]) pq += p[i] * q[i];
        if (!(pq > 0.0)) throw SolverError("pcg: operator is not positive definite on the free nodes", 1.0, it);
        const double alpha = rz / pq;
        double rr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (fixed[i]) continue;
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            rr += r[i] * r[i];
        }
        st.iterations = it;
        st.residual = std::sqrt(rr) / r0;
        if (st.residual <= opt.rtol) return st;
        double rz_new = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = fixed[i] ? 0.0 : r[i] / diag[i];
            rz_new += r[i] * z[i];
        }
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = fixed[i] ? 0.0 : z[i] + beta * p[i];
    }
    throw SolverError("pcg: no convergence within " + std::to_string(maxit) + " iterations", st.residual, maxit);
}

struct DiscreteField {
    std::shared_ptr<const Mesh> mesh;
    std::vector<double> values;
    SolveStats stats;
};

inline std::vector<double> interpolate(const Mesh& m, const std::function<double(const Point&)>& f) {
    std::vector<double> v(m.num_nodes());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(m.node(i));
    return v;
}

namespace detail {

inline void require_boundary(const Mesh& m) {
    if (m.num_boundary() == 0)
        throw SolverError("singular system: no boundary nodes, constants span the kernel", 0.0, 0);
}

}  // namespace detail

/// Discrete energy minimizer with u = boundary values at boundary nodes.
/// `boundary_values` must have one entry per node; interior entries are ignored.
inline DiscreteField solve_dirichlet(const CsrMatrix& K, std::shared_ptr<const Mesh> mesh,
                                     const std::vector<double>& boundary_values, const SolverOptions& opt = {}) {
    const Mesh& m = *mesh;
    detail::require_boundary(m);
    if (boundary_values.size() != m.num_nodes()) throw InvalidArgument("solve_dirichlet: data size mismatch");
    DiscreteField u{mesh, std::vector<double>(m.num_nodes(), 0.0), {}};
    for (std::size_t i = 0; i < m.num_nodes(); ++i)
        if (m.boundary[i]) u.values[i] = boundary_values[i];
    const std::vector<double> zero(m.num_nodes(), 0.0);
    u.stats = pcg(K, zero, u.values, m.boundary, opt);
    return u;
}

inline DiscreteField solve_dirichlet(const CoefficientField& A, std::shared_ptr<const Mesh> mesh,
                                     const std::function<double(const Point&)>& g, const SolverOptions& opt = {}) {
    const CsrMatrix K = assemble(A, *mesh);
    std::vector<double> bv(mesh->num_nodes(), 0.0);
    for (std::size_t i = 0; i < bv.size(); ++i)
        if (mesh->boundary[i]) bv[i] = g(mesh->node(i));
    return solve_dirichlet(K, mesh, bv, opt);
}

/// w with zero trace and int <A grad w, grad phi> = -int f phi for interior phi,
/// i.e. div(A grad w) = f.
inline DiscreteField solve_poisson_dirichlet(const CoefficientField& A, const std::function<double(const Point&)>& f,
                                             std::shared_ptr<const Mesh> mesh, const SolverOptions& opt = {}) {
    const Mesh& m = *mesh;
    detail::require_boundary(m);
    const CsrMatrix K = assemble(A, m);
    std::vector<double> F = assemble_load(f, m);
    for (double& v : F) v = -v;
    DiscreteField w{mesh, std::vector<double>(m.num_nodes(), 0.0), {}};
    w.stats = pcg(K, F, w.values, m.boundary, opt);
    return w;
}

/// u^T K u.
inline double quadratic_form(const CsrMatrix& K, const std::vector<double>& u) {
    std::vector<double> Ku;
    K.multiply(u, Ku);
    return std::inner_product(u.begin(), u.end(), Ku.begin(), 0.0);
}

/// sum over cells of vol * grad u^T A_cell grad u.
inline double energy(const CoefficientField& A, const Mesh& m, const std::vector<double>& u) {
    double e = 0.0;
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
        const CellGeometry g = cell_geometry(m, c);
        Point gu = Point::Zero(m.dim);
        for (int k = 0; k <= m.dim; ++k) gu += u[m.cell_node(c, k)] * g.grads.col(k);
        e += g.volume * gu.dot(cell_coefficient(A, m, c) * gu);
    }
    return e;
}

/// int weight dx by the cell rule.
inline double weighted_volume(const std::function<double(const Point&)>& weight, const Mesh& m) {
    const CellRule& rule = cell_rule(m.dim);
    double vol = 0.0;
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
        double w = 0.0;
        for (std::size_t q = 0; q < rule.weights.size(); ++q) w += rule.weights[q] * weight(cell_point(m, c, rule.bary[q]));
        vol += m.cell_volume(c) * w;
    }
    return vol;
}

/// L2 norm of u_h - exact by the cell rule.
inline double l2_error(const Mesh& m, const std::vector<double>& u, const std::function<double(const Point&)>& exact) {
    const CellRule& rule = cell_rule(m.dim);
    double s = 0.0;
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
        const double vol = m.cell_volume(c);
        for (std::size_t q = 0; q < rule.weights.size(); ++q) {
            double uh = 0.0;
            for (int k = 0; k <= m.dim; ++k) uh += rule.bary[q][k] * u[m.cell_node(c, k)];
            const double d = uh - exact(cell_point(m, c, rule.bary[q]));
            s += vol * rule.weights[q] * d * d;
        }
    }
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Ball averages

/// Distances defining a ball: node values (linear in each cell) and, when
/// available, the exact function used at sub-samples of cut cells.
struct DistanceField {
    std::vector<double> node_values;
    std::function<double(const Point&)> exact;
};

inline DistanceField euclidean_distance(const Mesh& m, const Point& center) {
    DistanceField d;
    d.node_values.resize(m.num_nodes());
    for (std::size_t i = 0; i < m.num_nodes(); ++i) d.node_values[i] = (m.node(i) - center).norm();
    d.exact = [center](const Point& x) { return (x - center).norm(); };
    return d;
}

struct BallAverage {
    double value = 0.0;    ///< energy / measure
    double energy = 0.0;   ///< integral of the integrand over the ball
    double measure = 0.0;  ///< weighted measure of the ball
    std::size_t cells = 0; ///< cells meeting the ball
    double h = 0.0;
};

namespace detail {

// Uniform samples of the reference simplex: midpoints of an L^n cube grid
// sorted decreasingly (a measure-preserving n!-to-1 fold onto the simplex).
inline const std::vector<std::vector<double>>& simplex_samples(int dim) {
    static const std::vector<std::vector<double>> cache[3] = {
        [] {
            std::vector<std::vector<double>> out;
            const int L = 16;
            for (int i = 0; i < L; ++i) {
                const double y = (i + 0.5) / L;
                out.push_back({1 - y, y});
            }
            return out;
        }(),
        [] {
            std::vector<std::vector<double>> out;
            const int L = 8;
            for (int i = 0; i < L; ++i)
                for (int j = 0; j < L; ++j) {
                    double y[2] = {(i + 0.5) / L, (j + 0.5) / L};
                    std::sort(y, y + 2, std::greater<>());
                    out.push_back({1 - y[0], y[0] - y[1], y[1]});
                }
            return out;
        }(),
        [] {
            std::vector<std::vector<double>> out;
            const int L = 5;
            for (int i = 0; i < L; ++i)
                for (int j = 0; j < L; ++j)
                    for (int k = 0; k < L; ++k) {
                        double y[3] = {(i + 0.5) / L, (j + 0.5) / L, (k + 0.5) / L};
                        std::sort(y, y + 3, std::greater<>());
                        out.push_back({1 - y[0], y[0] - y[1], y[1] - y[2], y[2]});
                    }
            return out;
        }(),
    };
    return cache[dim - 1];
}

}  // namespace detail

/// Average of integrand(x, grad u) with weight(x) over {d < r}. Cells fully
/// inside use the vertex-avoiding rule; cut cells use uniform sub-samples.
inline BallAverage ball_average(const Mesh& m, const std::vector<double>& u, const DistanceField& dist, double r,
                                const std::function<double(const Point&, const Point&)>& integrand,
                                const std::function<double(const Point&)>& weight) {
    if (!(r > 0.0)) throw InvalidArgument("ball_average: r must be positive");
    const int v = m.verts();
    BallAverage out;
    out.h = m.h;
    const CellRule& rule = cell_rule(m.dim);
    const auto& samples = detail::simplex_samples(m.dim);
    double total_vol = 0.0;
    for (std::size_t c = 0; c < m.num_cells(); ++c) {
        double dmin = std::numeric_limits<double>::infinity();
        double dmax = 0.0;
        for (int k = 0; k < v; ++k) {
            const double d = dist.node_values[m.cell_node(c, k)];
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
        }
        const CellGeometry g = cell_geometry(m, c);
        total_vol += g.volume;
        if (dmin >= r) continue;
        ++out.cells;
        Point gu = Point::Zero(m.dim);
        for (int k = 0; k < v; ++k) gu += u[m.cell_node(c, k)] * g.grads.col(k);
        if (dmax < r) {
            for (std::size_t q = 0; q < rule.weights.size(); ++q) {
                const Point x = cell_point(m, c, rule.bary[q]);
                const double w = weight(x) * rule.weights[q] * g.volume;
                out.energy += w * integrand(x, gu);
                out.measure += w;
            }
            continue;
        }
        const double ws = g.volume / static_cast<double>(samples.size());
        for (const auto& b : samples) {
            const Point x = cell_point(m, c, b);
            double d = 0.0;
            if (dist.exact) {
                d = dist.exact(x);
            } else {
                for (int k = 0; k < v; ++k) d += b[k] * dist.node_values[m.cell_node(c, k)];
            }
            if (d >= r) continue;
            const double w = weight(x) * ws;
            out.energy += w * integrand(x, gu);
            out.measure += w;
        }
    }
    if (out.cells < 8) {
        const double mean_cell = total_vol / static_cast<double>(m.num_cells());
        const double r_min = std::pow(8.0 * mean_cell / unit_ball_volume(m.dim), 1.0 / m.dim);
        throw ResolutionError("ball of radius " + std::to_string(r) + " meets only " + std::to_string(out.cells) +
                                  " cells (need 8); minimum admissible radius about " + std::to_string(r_min),
                              r_min);
    }
    out.value = out.energy / out.measure;
    return out;
}

/// (1 / |B_r|) int_{B_r(center)} |grad u|^2 dx.
inline BallAverage gradient_energy_average(const Mesh& m, const std::vector<double>& u, double r,
                                           const Point& center) {
    return ball_average(m, u, euclidean_distance(m, center), r,
                        [](const Point&, const Point& g) { return g.squaredNorm(); }, [](const Point&) { return 1.0; });
}

inline BallAverage gradient_energy_average(const Mesh& m, const std::vector<double>& u, double r) {
    return gradient_energy_average(m, u, r, Point::Zero(m.dim));
}

/// (1 / vol_g(B)) int_B g^{ij} d_i u d_j u sqrt(G) dx over B = {dist < r}.
inline BallAverage gradient_energy_average(const Mesh& m, const std::vector<double>& u, const MetricField& g,
                                           double r, const DistanceField& dist) {
    auto integrand = [&g](const Point& x, const Point& grad) {
        return grad.dot(g.inverse(x) * grad);
    };
    auto weight = [&g](const Point& x) { return std::sqrt(g.det(x)); };
    return ball_average(m, u, dist, r, integrand, weight);
}

inline void write_field_csv(std::ostream& os, const Mesh& m, const std::vector<double>& u) {
    static const char* axes[] = {"x [length]", "y [length]", "z [length]"};
    for (int d = 0; d < m.dim; ++d) os << axes[d] << ',';
    os << "u [1]\n";
    os.precision(17);
    for (std::size_t i = 0; i < m.num_nodes(); ++i) {
        for (int d = 0; d < m.dim; ++d) os << m.coords[i * m.dim + d] << ',';
        os << u[i] << '\n';
    }
}

}  // namespace conelab
