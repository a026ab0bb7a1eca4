#pragma once

// Simplicial meshes of intervals, discs, boxes and grid-approximated balls,
// plus a bucket point locator and an on-disk cache.

#include "conelab/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace conelab {

struct Mesh {
    int dim = 0;
    std::vector<double> coords;     ///< dim values per node
    std::vector<int> cells;         ///< dim + 1 node indices per simplex
    std::vector<std::uint8_t> boundary;
    double h = 0.0;                 ///< characteristic edge length
    double radius = 0.0;            ///< radius of the meshed ball, 0 for boxes
    std::string kind;

    std::size_t num_nodes() const noexcept { return boundary.size(); }
    std::size_t num_cells() const noexcept { return cells.size() / static_cast<std::size_t>(dim + 1); }
    int verts() const noexcept { return dim + 1; }

    Point node(std::size_t i) const {
        Point p(dim);
        for (int d = 0; d < dim; ++d) p[d] = coords[i * dim + d];
        return p;
    }
    int cell_node(std::size_t c, int k) const { return cells[c * (dim + 1) + k]; }

    /// Signed volume of cell c (positive for the generated orientations up to sign).
    double cell_volume(std::size_t c) const {
        Matrix m(dim, dim);
        const Point x0 = node(cell_node(c, 0));
        for (int k = 1; k <= dim; ++k) m.col(k - 1) = node(cell_node(c, k)) - x0;
        double f = 1.0;
        for (int k = 2; k <= dim; ++k) f *= k;
        return std::abs(m.determinant()) / f;
    }

    std::size_t num_boundary() const {
        return static_cast<std::size_t>(std::count(boundary.begin(), boundary.end(), std::uint8_t{1}));
    }
};

/// [a, b] split into `cells` equal pieces.
inline Mesh interval_mesh(double a, double b, int cells) {
    if (cells < 1 || !(b > a)) throw InvalidArgument("interval_mesh: need b > a and cells >= 1");
    Mesh m;
    m.dim = 1;
    m.kind = "interval";
    m.h = (b - a) / cells;
    for (int i = 0; i <= cells; ++i) m.coords.push_back(a + (b - a) * i / cells);
    for (int i = 0; i < cells; ++i) {
        m.cells.push_back(i);
        m.cells.push_back(i + 1);
    }
    m.boundary.assign(cells + 1, 0);
    m.boundary.front() = m.boundary.back() = 1;
    return m;
}

/// Disc of radius R: ring k (1..rings) carries 6k nodes on the circle of radius
/// kR/rings, giving 6 rings^2 triangles and an exact circular boundary.
inline Mesh disc_mesh(double R, int rings) {
    if (!(R > 0.0) || rings < 1) throw InvalidArgument("disc_mesh: need R > 0 and rings >= 1");
    Mesh m;
    m.dim = 2;
    m.kind = "disc";
    m.radius = R;
    m.h = R / rings;
    m.coords = {0.0, 0.0};
    std::vector<int> first(rings + 1, 0);
    for (int k = 1; k <= rings; ++k) {
        first[k] = static_cast<int>(m.coords.size() / 2);
        const double rk = R * k / rings;
        for (int j = 0; j < 6 * k; ++j) {
            const double a = 2.0 * std::numbers::pi * j / (6.0 * k);
            m.coords.push_back(rk * std::cos(a));
            m.coords.push_back(rk * std::sin(a));
        }
    }
    auto outer = [&](int k, int j) { return first[k] + (j % (6 * k)); };
    auto inner = [&](int k, int j) { return k == 1 ? 0 : first[k - 1] + (j % (6 * (k - 1))); };
    for (int k = 1; k <= rings; ++k)
        for (int s = 0; s < 6; ++s) {
            for (int j = 0; j < k; ++j) {
                m.cells.insert(m.cells.end(), {outer(k, s * k + j), outer(k, s * k + j + 1), inner(k, s * (k - 1) + j)});
                if (j + 1 < k)
                    m.cells.insert(m.cells.end(),
                                   {inner(k, s * (k - 1) + j), outer(k, s * k + j + 1), inner(k, s * (k - 1) + j + 1)});
            }
        }
    m.boundary.assign(m.coords.size() / 2, 0);
    for (std::size_t i = static_cast<std::size_t>(first[rings]); i < m.boundary.size(); ++i) m.boundary[i] = 1;
    return m;
}

namespace detail {

// Kuhn triangulation of the unit cube: one simplex per permutation of the axes.
inline std::vector<std::vector<int>> kuhn_simplices(int dim) {
    std::vector<int> perm(dim);
    for (int i = 0; i < dim; ++i) perm[i] = i;
    std::vector<std::vector<int>> out;
    do {
        std::vector<int> corners{0};
        int c = 0;
        for (int i = 0; i < dim; ++i) {
            c |= 1 << perm[i];
            corners.push_back(c);
        }
        out.push_back(corners);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

struct GridIndex {
    int dim;
    int n;  // cells per axis
    std::size_t node(const std::array<int, 3>& ijk) const {
        std::size_t id = 0;
        for (int d = dim - 1; d >= 0; --d) id = id * (n + 1) + static_cast<std::size_t>(ijk[d]);
        return id;
    }
};

// Grid of n^dim cells on [lo, hi]^dim; `keep(corner coordinates)` selects cubes.
template <class Keep>
Mesh grid_mesh(int dim, double lo, double hi, int n, Keep keep, const std::string& kind) {
    if (dim < 2 || dim > 3) throw InvalidArgument("grid meshes support dimension 2 and 3");
    if (n < 1 || !(hi > lo)) throw InvalidArgument("grid mesh: need hi > lo and n >= 1");
    const double step = (hi - lo) / n;
    const GridIndex gi{dim, n};
    const auto simplices = kuhn_simplices(dim);
    const std::size_t total_nodes = static_cast<std::size_t>(std::pow(n + 1, dim));
    std::vector<int> id(total_nodes, -1);
    std::vector<std::uint8_t> cut(total_nodes, 0);
    Mesh m;
    m.dim = dim;
    m.kind = kind;
    m.h = step;
    std::vector<int> local(1 << dim);
    const int nk = dim == 3 ? n : 1;
    for (int k = 0; k < nk; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                std::array<double, 8 * 3> corner{};
                std::array<std::size_t, 8> gid{};
                for (int c = 0; c < (1 << dim); ++c) {
                    const std::array<int, 3> ijk{i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)};
                    gid[c] = gi.node(ijk);
                    for (int d = 0; d < dim; ++d) corner[c * 3 + d] = lo + step * ijk[d];
                }
                const bool inside = keep(corner.data(), 1 << dim);
                for (int c = 0; c < (1 << dim); ++c) {
                    if (!inside) {
                        cut[gid[c]] = 1;
                        continue;
                    }
                    if (id[gid[c]] < 0) {
                        id[gid[c]] = static_cast<int>(m.coords.size() / dim);
                        for (int d = 0; d < dim; ++d) m.coords.push_back(corner[c * 3 + d]);
                    }
                    local[c] = id[gid[c]];
                }
                if (!inside) continue;
                for (const auto& s : simplices)
                    for (int c : s) m.cells.push_back(local[c]);
            }
    m.boundary.assign(m.coords.size() / dim, 0);
    for (std::size_t g = 0; g < total_nodes; ++g) {
        if (id[g] < 0) continue;
        bool on_edge = false;
        std::size_t rem = g;
        for (int d = 0; d < dim; ++d) {
            const std::size_t q = rem % (n + 1);
            rem /= (n + 1);
            if (q == 0 || q == static_cast<std::size_t>(n)) on_edge = true;
        }
        if (on_edge || cut[g]) m.boundary[id[g]] = 1;
    }
    return m;
}

}  // namespace detail

/// [lo, hi]^dim with n cells per axis, Kuhn-split (2 triangles or 6 tetrahedra per cube).
inline Mesh box_mesh(int dim, double lo, double hi, int n) {
    return detail::grid_mesh(dim, lo, hi, n, [](const double*, int) { return true; }, "box");
}

/// Cubes of the grid on [-R, R]^dim lying entirely in the closed ball of radius R.
/// The boundary is the staircase of nodes touching a discarded cube.
inline Mesh ball_grid_mesh(int dim, double R, int n) {
    if (!(R > 0.0)) throw InvalidArgument("ball_grid_mesh: R must be positive");
    const double R2 = R * R * (1.0 + 1e-12);
    Mesh m = detail::grid_mesh(dim, -R, R, n, [dim, R2](const double* c, int count) {
        for (int k = 0; k < count; ++k) {
            double s = 0.0;
            for (int d = 0; d < dim; ++d) s += c[k * 3 + d] * c[k * 3 + d];
            if (s > R2) return false;
        }
        return true;
    }, "ball_grid");
    m.radius = R;
    return m;
}

/// Restriction of a mesh to a subset of its cells, renumbered. Nodes touching a
/// cell outside the subset (or on the parent boundary) become boundary nodes.
struct SubMesh {
    Mesh mesh;
    std::vector<int> parent_node;  ///< submesh node -> parent node
};

inline SubMesh extract_submesh(const Mesh& parent, const std::vector<std::uint8_t>& cell_mask) {
    if (cell_mask.size() != parent.num_cells()) throw InvalidArgument("extract_submesh: mask size mismatch");
    const int v = parent.verts();
    std::vector<int> map(parent.num_nodes(), -1);
    std::vector<std::uint8_t> touches_out(parent.num_nodes(), 0);
    SubMesh sub;
    Mesh& m = sub.mesh;
    m.dim = parent.dim;
    m.h = parent.h;
    m.kind = parent.kind + "/sub";
    for (std::size_t c = 0; c < parent.num_cells(); ++c) {
        for (int k = 0; k < v; ++k) {
            const int p = parent.cell_node(c, k);
            if (!cell_mask[c]) {
                touches_out[p] = 1;
                continue;
            }
            if (map[p] < 0) {
                map[p] = static_cast<int>(sub.parent_node.size());
                sub.parent_node.push_back(p);
                for (int d = 0; d < m.dim; ++d) m.coords.push_back(parent.coords[p * m.dim + d]);
            }
            m.cells.push_back(map[p]);
        }
    }
    m.boundary.assign(sub.parent_node.size(), 0);
    for (std::size_t i = 0; i < sub.parent_node.size(); ++i) {
        const int p = sub.parent_node[i];
        m.boundary[i] = (touches_out[p] || parent.boundary[p]) ? 1 : 0;
    }
    return sub;
}

/// Barycentric coordinates of x in cell c.
inline Point barycentric(const Mesh& m, std::size_t c, const Point& x) {
    const int n = m.dim;
    Matrix J(n, n);
    const Point x0 = m.node(m.cell_node(c, 0));
    for (int k = 1; k <= n; ++k) J.col(k - 1) = m.node(m.cell_node(c, k)) - x0;
    const Point y = J.partialPivLu().solve(x - x0);
    Point b(n + 1);
    b[0] = 1.0 - y.sum();
    for (int k = 0; k < n; ++k) b[k + 1] = y[k];
    return b;
}

/// Uniform bucket grid over the mesh bounding box, each bucket listing the cells
/// whose bounding boxes meet it.
class PointLocator {
public:
    explicit PointLocator(std::shared_ptr<const Mesh> mesh) : mesh_(std::move(mesh)) {
        const Mesh& m = *mesh_;
        dim_ = m.dim;
        lo_.assign(dim_, std::numeric_limits<double>::infinity());
        hi_.assign(dim_, -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < m.num_nodes(); ++i)
            for (int d = 0; d < dim_; ++d) {
                lo_[d] = std::min(lo_[d], m.coords[i * dim_ + d]);
                hi_[d] = std::max(hi_[d], m.coords[i * dim_ + d]);
            }
        const double cells_per_bucket = 2.0;
        const double target = std::pow(static_cast<double>(m.num_cells()) / cells_per_bucket, 1.0 / dim_);
        nb_ = std::max(1, static_cast<int>(target));
        buckets_.resize(static_cast<std::size_t>(std::pow(nb_, dim_)));
        for (std::size_t c = 0; c < m.num_cells(); ++c) {
            std::array<int, 3> bl{0, 0, 0};
            std::array<int, 3> bh{0, 0, 0};
            for (int d = 0; d < dim_; ++d) {
                double a = std::numeric_limits<double>::infinity();
                double b = -a;
                for (int k = 0; k < m.verts(); ++k) {
                    const double v = m.coords[m.cell_node(c, k) * dim_ + d];
                    a = std::min(a, v);
                    b = std::max(b, v);
                }
                bl[d] = bucket_coord(a, d);
                bh[d] = bucket_coord(b, d);
            }
            for (int k = bl[2]; k <= bh[2]; ++k)
                for (int j = bl[1]; j <= bh[1]; ++j)
                    for (int i = bl[0]; i <= bh[0]; ++i) buckets_[flat({i, j, k})].push_back(static_cast<int>(c));
        }
    }

    /// Cell containing x and its barycentric coordinates, if x is in the mesh.
    std::optional<std::pair<std::size_t, Point>> locate(const Point& x) const {
        std::array<int, 3> b{0, 0, 0};
        for (int d = 0; d < dim_; ++d) {
            if (x[d] < lo_[d] - 1e-12 || x[d] > hi_[d] + 1e-12) return std::nullopt;
            b[d] = bucket_coord(x[d], d);
        }
        const double tol = -1e-12;
        for (int c : buckets_[flat(b)]) {
            Point bc = barycentric(*mesh_, static_cast<std::size_t>(c), x);
            if (bc.minCoeff() >= tol) return std::make_pair(static_cast<std::size_t>(c), bc);
        }
        return std::nullopt;
    }

    /// P1 interpolation of node values; throws if x is outside the mesh.
    double interpolate(const std::vector<double>& values, const Point& x) const {
        const auto hit = locate(x);
        if (!hit) throw InvalidArgument("point " + detail::format_point(x) + " lies outside the mesh");
        double v = 0.0;
        for (int k = 0; k <= dim_; ++k) v += hit->second[k] * values[mesh_->cell_node(hit->first, k)];
        return v;
    }

    const Mesh& mesh() const noexcept { return *mesh_; }

private:
    int bucket_coord(double v, int d) const {
        const double span = hi_[d] - lo_[d];
        const int b = span > 0 ? static_cast<int>((v - lo_[d]) / span * nb_) : 0;
        return std::clamp(b, 0, nb_ - 1);
    }
    std::size_t flat(const std::array<int, 3>& b) const {
        std::size_t id = 0;
        for (int d = dim_ - 1; d >= 0; --d) id = id * nb_ + static_cast<std::size_t>(b[d]);
        return id;
    }

    std::shared_ptr<const Mesh> mesh_;
    int dim_ = 0;
    int nb_ = 1;
    std::vector<double> lo_;
    std::vector<double> hi_;
    std::vector<std::vector<int>> buckets_;
};

// ---------------------------------------------------------------------------
// Disk cache keyed by (domain, resolution, type). The directory comes from
// CONELAB_CACHE_DIR; without it meshes are always rebuilt.

namespace detail {

inline void write_mesh(const Mesh& m, const std::filesystem::path& p) {
    const std::filesystem::path tmp = p.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        auto put = [&](const auto& v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
        auto put_vec = [&](const auto& vec) {
            const std::uint64_t n = vec.size();
            put(n);
            os.write(reinterpret_cast<const char*>(vec.data()),
                     static_cast<std::streamsize>(n * sizeof(typename std::decay_t<decltype(vec)>::value_type)));
        };
        put(m.dim);
        put(m.h);
        put(m.radius);
        put_vec(m.coords);
        put_vec(m.cells);
        put_vec(m.boundary);
        put_vec(m.kind);
        if (!os) return;
    }
    std::error_code ec;
    std::filesystem::rename(tmp, p, ec);
    if (ec) std::filesystem::remove(tmp, ec);
}

inline std::optional<Mesh> read_mesh(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) return std::nullopt;
    Mesh m;
    auto get = [&](auto& v) { is.read(reinterpret_cast<char*>(&v), sizeof(v)); };
    auto get_vec = [&](auto& vec) {
        std::uint64_t n = 0;
        get(n);
        if (!is || n > (1ull << 34)) return;
        vec.resize(n);
        is.read(reinterpret_cast<char*>(vec.data()),
                static_cast<std::streamsize>(n * sizeof(typename std::decay_t<decltype(vec)>::value_type)));
    };
    get(m.dim);
    get(m.h);
    get(m.radius);
    get_vec(m.coords);
    get_vec(m.cells);
    get_vec(m.boundary);
    get_vec(m.kind);
    if (!is || m.dim < 1 || m.dim > 3) return std::nullopt;
    return m;
}

}  // namespace detail

inline std::optional<std::filesystem::path> mesh_cache_dir() {
    const char* dir = std::getenv("CONELAB_CACHE_DIR");
    if (!dir || !*dir) return std::nullopt;
    return std::filesystem::path(dir);
}

/// Looks the mesh up in the cache directory or builds and stores it.
template <class Build>
std::shared_ptr<const Mesh> cached_mesh(const std::string& key, Build build) {
    const auto dir = mesh_cache_dir();
    if (dir) {
        const auto path = *dir / (key + ".mesh");
        if (auto m = detail::read_mesh(path)) return std::make_shared<const Mesh>(std::move(*m));
        Mesh m = build();
        std::error_code ec;
        std::filesystem::create_directories(*dir, ec);
        if (!ec) detail::write_mesh(m, path);
        return std::make_shared<const Mesh>(std::move(m));
    }
    return std::make_shared<const Mesh>(build());
}

inline std::shared_ptr<const Mesh> cached_ball_grid(int dim, double R, int n) {
    const std::string key = "ball_grid_d" + std::to_string(dim) + "_R" + std::to_string(R) + "_n" + std::to_string(n);
    return cached_mesh(key, [&] { return ball_grid_mesh(dim, R, n); });
}

inline std::shared_ptr<const Mesh> cached_disc(double R, int rings) {
    const std::string key = "disc_R" + std::to_string(R) + "_m" + std::to_string(rings);
    return cached_mesh(key, [&] { return disc_mesh(R, rings); });
}

}  // namespace conelab
