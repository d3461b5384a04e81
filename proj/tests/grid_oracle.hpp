// Brute-force Dijkstra used to check the planner's cost on small grids.
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <random>

#include "atm/navigation.hpp"

namespace atm::oracle {

/// Cost of the cheapest 8-connected route with the planner's corner rule, or nullopt.
/// Costs are kept as (straight, diagonal) counts so the value is computed the same way.
inline std::optional<double> dijkstra_cost(const OccupancyGrid& grid, std::pair<int, int> s,
                                           std::pair<int, int> g) {
    const int W = grid.width();
    const int H = grid.height();
    const double r2 = std::sqrt(2.0);
    std::vector<double> dist(static_cast<std::size_t>(W * H), std::numeric_limits<double>::infinity());
    std::vector<int> straight(dist.size(), 0);
    std::vector<int> diagonal(dist.size(), 0);
    std::vector<char> done(dist.size(), 0);
    dist[grid.index(s.first, s.second)] = 0.0;
    // O(V^2) selection: slow but obviously correct.
    for (;;) {
        std::size_t best = dist.size();
        for (std::size_t k = 0; k < dist.size(); ++k) {
            if (!done[k] && std::isfinite(dist[k]) && (best == dist.size() || dist[k] < dist[best])) best = k;
        }
        if (best == dist.size()) return std::nullopt;
        done[best] = 1;
        const int i = static_cast<int>(best) % W;
        const int j = static_cast<int>(best) / W;
        if (i == g.first && j == g.second) return dist[best];
        for (int dx = -1; dx <= 1; ++dx) {
            for (int dy = -1; dy <= 1; ++dy) {
                if (dx == 0 && dy == 0) continue;
                const int ni = i + dx;
                const int nj = j + dy;
                if (!grid.in_bounds(ni, nj) || grid.occupied(ni, nj)) continue;
                const bool diag = dx != 0 && dy != 0;
                if (diag && (grid.occupied(i + dx, j) || grid.occupied(i, j + dy))) continue;
                const int ns = straight[best] + (diag ? 0 : 1);
                const int nd = diagonal[best] + (diag ? 1 : 0);
                const double c = ns + r2 * nd;
                const std::size_t nk = grid.index(ni, nj);
                if (c < dist[nk]) {
                    dist[nk] = c;
                    straight[nk] = ns;
                    diagonal[nk] = nd;
                }
            }
        }
    }
}

/// Random 20x20 grid with about `density` of cells blocked; start and goal cells are free.
struct RandomCase {
    OccupancyGrid grid;
    std::pair<int, int> start;
    std::pair<int, int> goal;
};

inline RandomCase random_case(std::mt19937_64& rng, double density = 0.3, int size = 20) {
    RandomCase rc{OccupancyGrid({0.0, 0.0}, 0.05, size, size), {}, {}};
    std::bernoulli_distribution blocked(density);
    for (int j = 0; j < size; ++j) {
        for (int i = 0; i < size; ++i) rc.grid.set(i, j, blocked(rng));
    }
    std::uniform_int_distribution<int> cell(0, size - 1);
    rc.start = {cell(rng), cell(rng)};
    do {
        rc.goal = {cell(rng), cell(rng)};
    } while (rc.goal == rc.start);
    rc.grid.set(rc.start.first, rc.start.second, false);
    rc.grid.set(rc.goal.first, rc.goal.second, false);
    return rc;
}

}  // namespace atm::oracle
