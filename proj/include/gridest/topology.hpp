#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gridest {

/// Zero-based bus index. Config files and the CLI use one-based numbering;
/// conversion happens at the I/O boundary only.
using BusIndex = std::size_t;

/// Unordered pair of buses joined by a transmission line, stored with
/// `from < to`.
struct Branch {
    BusIndex from = 0;
    BusIndex to = 0;

    friend bool operator==(Branch const&, Branch const&) = default;
    friend auto operator<=>(Branch const&, Branch const&) = default;
};

class TopologyError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bus-network graph with per-bus measurement-noise variances and a
/// partition into control areas.
///
/// Immutable once constructed. Neighborhoods are self-inclusive and sorted
/// ascending so every algorithm iterates them in the same order.
class Topology {
  public:
    /// Validates and builds a topology. Throws TopologyError on an empty
    /// network, out-of-range or self-loop branches, duplicate branches,
    /// negative or non-finite variances, or an area list that does not
    /// partition the buses. An empty `areas` means one area per bus.
    Topology(std::size_t num_buses, std::vector<Branch> branches,
             std::vector<double> noise_variance,
             std::vector<std::vector<BusIndex>> areas = {})
        : num_buses_(num_buses),
          branches_(std::move(branches)),
          noise_variance_(std::move(noise_variance)),
          areas_(std::move(areas)) {
        if (num_buses_ == 0) {
            throw TopologyError("topology must contain at least one bus");
        }
        if (noise_variance_.size() != num_buses_) {
            throw TopologyError("noise variance list has " + std::to_string(noise_variance_.size()) +
                                " entries, expected " + std::to_string(num_buses_));
        }
        for (std::size_t k = 0; k < num_buses_; ++k) {
            double const v = noise_variance_[k];
            if (!std::isfinite(v) || v < 0.0) {
                throw TopologyError("noise variance of bus " + std::to_string(k + 1) +
                                    " must be finite and nonnegative");
            }
        }

        std::set<Branch> seen;
        for (auto& b : branches_) {
            if (b.from >= num_buses_ || b.to >= num_buses_) {
                throw TopologyError("branch (" + std::to_string(b.from + 1) + "," +
                                    std::to_string(b.to + 1) + ") references unknown bus");
            }
            if (b.from == b.to) {
                throw TopologyError("self-loop branch at bus " + std::to_string(b.from + 1));
            }
            if (b.from > b.to) std::swap(b.from, b.to);
            if (!seen.insert(b).second) {
                throw TopologyError("duplicate branch (" + std::to_string(b.from + 1) + "," +
                                    std::to_string(b.to + 1) + ")");
            }
        }

        if (areas_.empty()) {
            for (BusIndex k = 0; k < num_buses_; ++k) areas_.push_back({k});
        }
        area_of_.assign(num_buses_, num_buses_);
        for (std::size_t a = 0; a < areas_.size(); ++a) {
            auto& area = areas_[a];
            if (area.empty()) {
                throw TopologyError("area " + std::to_string(a + 1) + " is empty");
            }
            std::sort(area.begin(), area.end());
            for (BusIndex k : area) {
                if (k >= num_buses_) {
                    throw TopologyError("area " + std::to_string(a + 1) + " references unknown bus " +
                                        std::to_string(k + 1));
                }
                if (area_of_[k] != num_buses_) {
                    throw TopologyError("bus " + std::to_string(k + 1) + " appears in more than one area");
                }
                area_of_[k] = a;
            }
        }
        for (BusIndex k = 0; k < num_buses_; ++k) {
            if (area_of_[k] == num_buses_) {
                throw TopologyError("areas do not cover bus " + std::to_string(k + 1));
            }
        }

        neighborhoods_.resize(num_buses_);
        for (BusIndex k = 0; k < num_buses_; ++k) neighborhoods_[k].push_back(k);
        for (auto const& b : branches_) {
            neighborhoods_[b.from].push_back(b.to);
            neighborhoods_[b.to].push_back(b.from);
        }
        for (auto& n : neighborhoods_) std::sort(n.begin(), n.end());
    }

    std::size_t num_buses() const noexcept { return num_buses_; }
    std::vector<Branch> const& branches() const noexcept { return branches_; }
    std::vector<double> const& noise_variance() const noexcept { return noise_variance_; }
    double noise_variance(BusIndex k) const { return noise_variance_.at(check(k)); }
    std::vector<std::vector<BusIndex>> const& areas() const noexcept { return areas_; }
    std::size_t area_of(BusIndex k) const { return area_of_[check(k)]; }

    /// N_k: bus k together with every bus sharing a branch with it, ascending.
    std::vector<BusIndex> const& neighborhood(BusIndex k) const { return neighborhoods_[check(k)]; }

    /// Number of incident branches (|N_k| - 1).
    std::size_t degree(BusIndex k) const { return neighborhood(k).size() - 1; }

    bool linked(BusIndex k, BusIndex l) const {
        auto const& n = neighborhood(k);
        return k != l && std::binary_search(n.begin(), n.end(), check(l));
    }

    /// Same graph and areas with every bus's variance replaced by `variance`.
    Topology with_uniform_noise(double variance) const {
        return Topology(num_buses_, branches_, std::vector<double>(num_buses_, variance), areas_);
    }

    friend bool operator==(Topology const& a, Topology const& b) {
        return a.num_buses_ == b.num_buses_ && a.branches_ == b.branches_ &&
               a.noise_variance_ == b.noise_variance_ && a.areas_ == b.areas_;
    }

  private:
    BusIndex check(BusIndex k) const {
        if (k >= num_buses_) {
            throw std::out_of_range("bus index " + std::to_string(k + 1) + " outside [1, " +
                                    std::to_string(num_buses_) + "]");
        }
        return k;
    }

    std::size_t num_buses_;
    std::vector<Branch> branches_;
    std::vector<double> noise_variance_;
    std::vector<std::vector<BusIndex>> areas_;
    std::vector<std::size_t> area_of_;
    std::vector<std::vector<BusIndex>> neighborhoods_;
};

/// Areas adjacent to `area`: those joined to it by at least one branch.
inline std::vector<std::size_t> adjacent_areas(Topology const& t, std::size_t area) {
    std::set<std::size_t> out;
    for (auto const& b : t.branches()) {
        auto const af = t.area_of(b.from);
        auto const at = t.area_of(b.to);
        if (af == at) continue;
        if (af == area) out.insert(at);
        if (at == area) out.insert(af);
    }
    return {out.begin(), out.end()};
}

}  // namespace gridest
