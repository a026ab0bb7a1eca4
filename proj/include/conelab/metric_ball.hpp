#pragma once

// Riemannian distance from a grid node by Dijkstra on the lattice graph with
// long-range stencil edges of length sqrt(e^T g(midpoint) e).

#include "conelab/coefficient.hpp"
#include "conelab/mesh.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

namespace conelab {

namespace detail {

// Primitive integer offsets with |component| <= reach (gcd of entries equal to 1).
inline std::vector<std::array<int, 3>> primitive_offsets(int dim, int reach) {
    std::vector<std::array<int, 3>> out;
    const int kz = dim == 3 ? reach : 0;
    for (int k = -kz; k <= kz; ++k)
        for (int j = -reach; j <= reach; ++j)
            for (int i = -reach; i <= reach; ++i) {
                if (i == 0 && j == 0 && k == 0) continue;
                if (std::gcd(std::gcd(std::abs(i), std::abs(j)), std::abs(k)) != 1) continue;
                out.push_back({i, j, k});
            }
    return out;
}

}  // namespace detail

/// d_g(source, node) for every node of a grid-based mesh (box or ball grid).
/// The search stops once `max_dist` is exceeded; unsettled nodes keep +infinity.
/// Paths run through mesh nodes only.
inline std::vector<double> metric_distances(const Mesh& m, const MetricField& g, const Point& source,
                                            double max_dist = std::numeric_limits<double>::infinity(),
                                            int reach = 3) {
    if (m.dim < 2 || m.dim > 3) throw InvalidArgument("metric_distances: grid meshes of dimension 2 or 3 only");
    if (g.dimension() != m.dim) throw InvalidArgument("metric_distances: metric dimension mismatch");
    const int dim = m.dim;
    const double h = m.h;
    std::array<double, 3> lo{0, 0, 0};
    std::array<int, 3> extent{1, 1, 1};
    for (int d = 0; d < dim; ++d) {
        double a = std::numeric_limits<double>::infinity();
        double b = -a;
        for (std::size_t i = 0; i < m.num_nodes(); ++i) {
            a = std::min(a, m.coords[i * dim + d]);
            b = std::max(b, m.coords[i * dim + d]);
        }
        lo[d] = a;
        extent[d] = static_cast<int>(std::lround((b - a) / h)) + 1;
    }
    auto grid_of = [&](std::size_t i) {
        std::array<int, 3> ijk{0, 0, 0};
        for (int d = 0; d < dim; ++d) ijk[d] = static_cast<int>(std::lround((m.coords[i * dim + d] - lo[d]) / h));
        return ijk;
    };
    auto flat = [&](const std::array<int, 3>& ijk) {
        return (static_cast<std::size_t>(ijk[2]) * extent[1] + ijk[1]) * extent[0] + ijk[0];
    };
    std::vector<int> node_at(static_cast<std::size_t>(extent[0]) * extent[1] * extent[2], -1);
    for (std::size_t i = 0; i < m.num_nodes(); ++i) {
        const auto ijk = grid_of(i);
        for (int d = 0; d < dim; ++d)
            if (std::abs(m.coords[i * dim + d] - (lo[d] + h * ijk[d])) > 1e-9 * h)
                throw InvalidArgument("metric_distances: mesh nodes are not on a uniform grid");
        node_at[flat(ijk)] = static_cast<int>(i);
    }
    std::size_t src = m.num_nodes();
    for (std::size_t i = 0; i < m.num_nodes(); ++i)
        if ((m.node(i) - source).norm() <= 1e-9 * h) src = i;
    if (src == m.num_nodes()) throw InvalidArgument("metric_distances: source is not a mesh node");

    const auto offsets = detail::primitive_offsets(dim, reach);
    std::vector<double> dist(m.num_nodes(), std::numeric_limits<double>::infinity());
    std::vector<std::uint8_t> done(m.num_nodes(), 0);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[src] = 0.0;
    heap.push({0.0, src});
    Point e(dim);
    while (!heap.empty()) {
        const auto [d0, i] = heap.top();
        heap.pop();
        if (done[i]) continue;
        done[i] = 1;
        if (d0 > max_dist) break;
        const auto ijk = grid_of(i);
        const Point xi = m.node(i);
        for (const auto& off : offsets) {
            std::array<int, 3> nb{ijk[0] + off[0], ijk[1] + off[1], ijk[2] + off[2]};
            bool inside = true;
            for (int d = 0; d < 3; ++d) inside = inside && nb[d] >= 0 && nb[d] < extent[d];
            if (!inside) continue;
            const int j = node_at[flat(nb)];
            if (j < 0 || done[j]) continue;
            for (int d = 0; d < dim; ++d) e[d] = h * off[d];
            const double w = std::sqrt(e.dot(g.metric(xi + 0.5 * e) * e));
            if (d0 + w < dist[j]) {
                dist[j] = d0 + w;
                heap.push({dist[j], static_cast<std::size_t>(j)});
            }
        }
    }
    for (std::size_t i = 0; i < m.num_nodes(); ++i)
        if (!done[i]) dist[i] = std::numeric_limits<double>::infinity();
    return dist;
}

}  // namespace conelab
