#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gridest/measurement.hpp"
#include "gridest/topology.hpp"

namespace gridest {

enum class GapDefinition {
    own_angle,  // theta[k] - x_k[k]
    l1_norm,    // ||theta - x_k||_1
};

inline std::string_view to_string(GapDefinition d) { return d == GapDefinition::own_angle ? "own-angle" : "l1"; }

inline GapDefinition parse_gap_definition(std::string_view name) {
    if (name == "own-angle") return GapDefinition::own_angle;
    if (name == "l1") return GapDefinition::l1_norm;
    throw std::invalid_argument("unknown gap definition '" + std::string(name) + "'");
}

/// Mean-square deviation across buses: (1/K) sum_k ||x_k - theta||^2.
inline double network_mse(std::span<Vector const> estimates, Vector const& theta) {
    if (estimates.empty()) throw std::invalid_argument("no estimates");
    double sum = 0.0;
    for (auto const& x : estimates) {
        if (x.size() != theta.size()) throw std::invalid_argument("estimate length mismatch");
        sum += (x - theta).squaredNorm();
    }
    return sum / static_cast<double>(estimates.size());
}

inline double phase_angle_gap(std::span<Vector const> estimates, Vector const& theta, BusIndex k,
                              GapDefinition definition = GapDefinition::own_angle) {
    if (k >= estimates.size() || static_cast<Eigen::Index>(k) >= theta.size()) {
        throw std::out_of_range("bus index " + std::to_string(k + 1) + " out of range");
    }
    auto const& x = estimates[k];
    if (definition == GapDefinition::own_angle) {
        auto const i = static_cast<Eigen::Index>(k);
        return theta[i] - x[i];
    }
    return (theta - x).lpNorm<1>();
}

/// Per-iteration network MSE and phase-angle gaps at selected buses.
/// `mse[i]` and `gap[b][i]` hold values after round i + 1; the initial
/// estimate's values are kept separately.
struct MetricsTrace {
    double initial_mse = 0.0;
    std::vector<double> mse;
    std::vector<BusIndex> gap_buses;
    std::vector<double> initial_gap;
    std::vector<std::vector<double>> gap;
    std::size_t runs = 1;

    std::size_t iterations() const noexcept { return mse.size(); }

    friend bool operator==(MetricsTrace const&, MetricsTrace const&) = default;
};

class TraceRecorder {
  public:
    TraceRecorder(Vector theta, std::vector<BusIndex> gap_buses, GapDefinition definition, std::size_t iterations)
        : theta_(std::move(theta)), definition_(definition) {
        trace_.gap_buses = std::move(gap_buses);
        trace_.mse.reserve(iterations);
        trace_.gap.assign(trace_.gap_buses.size(), {});
        for (auto& g : trace_.gap) g.reserve(iterations);
    }

    void record_initial(std::span<Vector const> estimates) {
        trace_.initial_mse = network_mse(estimates, theta_);
        trace_.initial_gap.clear();
        for (BusIndex b : trace_.gap_buses) trace_.initial_gap.push_back(phase_angle_gap(estimates, theta_, b, definition_));
    }

    void record(std::span<Vector const> estimates) {
        trace_.mse.push_back(network_mse(estimates, theta_));
        for (std::size_t j = 0; j < trace_.gap_buses.size(); ++j) {
            trace_.gap[j].push_back(phase_angle_gap(estimates, theta_, trace_.gap_buses[j], definition_));
        }
    }

    MetricsTrace const& trace() const noexcept { return trace_; }
    MetricsTrace take() && { return std::move(trace_); }

  private:
    Vector theta_;
    GapDefinition definition_;
    MetricsTrace trace_;
};

namespace detail {

// Mean of the values in ascending order, so the result does not depend on
// the order the runs arrived in.
inline double order_free_mean(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

}  // namespace detail

/// Pointwise mean of equally weighted traces. The result is bit-identical
/// under any permutation of the input list.
inline MetricsTrace average_traces(std::span<MetricsTrace const> traces) {
    if (traces.empty()) throw std::invalid_argument("cannot average an empty list of traces");
    auto const& first = traces.front();
    for (auto const& t : traces) {
        if (t.mse.size() != first.mse.size() || t.gap_buses != first.gap_buses ||
            t.initial_gap.size() != first.initial_gap.size() || t.gap.size() != first.gap.size()) {
            throw std::invalid_argument("traces differ in shape");
        }
        for (std::size_t j = 0; j < t.gap.size(); ++j) {
            if (t.gap[j].size() != first.gap[j].size()) throw std::invalid_argument("traces differ in shape");
        }
    }

    std::vector<double> column(traces.size());
    auto mean_of = [&](auto pick) {
        for (std::size_t r = 0; r < traces.size(); ++r) column[r] = pick(traces[r]);
        return detail::order_free_mean(column);
    };

    MetricsTrace out;
    out.runs = traces.size();
    out.gap_buses = first.gap_buses;
    out.initial_mse = mean_of([](MetricsTrace const& t) { return t.initial_mse; });
    out.mse.resize(first.mse.size());
    for (std::size_t i = 0; i < out.mse.size(); ++i) {
        out.mse[i] = mean_of([i](MetricsTrace const& t) { return t.mse[i]; });
    }
    out.initial_gap.resize(first.initial_gap.size());
    out.gap.resize(first.gap.size());
    for (std::size_t j = 0; j < out.gap.size(); ++j) {
        out.initial_gap[j] = mean_of([j](MetricsTrace const& t) { return t.initial_gap[j]; });
        out.gap[j].resize(first.gap[j].size());
        for (std::size_t i = 0; i < out.gap[j].size(); ++i) {
            out.gap[j][i] = mean_of([i, j](MetricsTrace const& t) { return t.gap[j][i]; });
        }
    }
    return out;
}

}  // namespace gridest
