#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridest/combiner.hpp"
#include "gridest/measurement.hpp"
#include "gridest/topology.hpp"

namespace gridest {

enum class Algorithm { atc, mcse, desta, dsita };

inline std::string_view to_string(Algorithm a) {
    switch (a) {
        case Algorithm::atc: return "atc";
        case Algorithm::mcse: return "mcse";
        case Algorithm::desta: return "desta";
        case Algorithm::dsita: return "dsita";
    }
    return "?";
}

inline Algorithm parse_algorithm(std::string_view name) {
    if (name == "atc") return Algorithm::atc;
    if (name == "mcse") return Algorithm::mcse;
    if (name == "desta") return Algorithm::desta;
    if (name == "dsita") return Algorithm::dsita;
    throw std::invalid_argument("unknown algorithm '" + std::string(name) + "'");
}

/// initial / (1 + i)^decay; decay = 0 gives a constant sequence.
struct DecaySequence {
    double initial = 0.018;
    double decay = 0.0;

    double at(std::size_t i) const {
        return decay == 0.0 ? initial : initial / std::pow(1.0 + static_cast<double>(i), decay);
    }

    friend bool operator==(DecaySequence const&, DecaySequence const&) = default;
};

struct EstimatorParams {
    double mu = 0.018;
    std::vector<double> mu_per_bus;  // overrides mu when nonempty
    double rho = 0.07;
    double epsilon = 10.0;
    bool desta_renormalize = true;
    double desta_smoothing = 0.0;  // EWMA factor on squared subset errors; 0 = instantaneous |e|
    DecaySequence mcse_alpha{0.018, 0.0};
    DecaySequence mcse_beta{0.018, 0.0};

    double step_size(BusIndex k) const { return mu_per_bus.empty() ? mu : mu_per_bus.at(k); }

    friend bool operator==(EstimatorParams const&, EstimatorParams const&) = default;
};

/// Per-bus estimates x_k and intermediate estimates psi_k after `iteration`
/// completed rounds.
struct EstimatorState {
    std::vector<Vector> x;
    std::vector<Vector> psi;
    std::size_t iteration = 0;
    std::vector<std::vector<double>> desta_scores;  // smoothed error per bus per subset mask

    static EstimatorState zeros(std::size_t num_buses) {
        EstimatorState s;
        auto const n = static_cast<Eigen::Index>(num_buses);
        s.x.assign(num_buses, Vector::Zero(n));
        s.psi.assign(num_buses, Vector::Zero(n));
        return s;
    }
};

/// LMS adaptation: psi = x_prev + mu h (z - h^T x_prev).
inline Vector adapt_step(Vector const& x_prev, MeasurementSample const& sample, double mu) {
    if (x_prev.size() != sample.regressor.size()) throw std::invalid_argument("regressor length mismatch");
    double const err = sample.value - sample.regressor.dot(x_prev);
    return x_prev + (mu * err) * sample.regressor;
}

/// sum_j w_j psi_{members_j}, accumulated in member order. Every combination
/// rule goes through here so equal weights give bit-identical results.
inline Vector weighted_sum(std::vector<Vector> const& psi, std::span<BusIndex const> members,
                           Eigen::VectorXd const& w) {
    Vector out = Vector::Zero(psi.at(members[0]).size());
    for (std::size_t j = 0; j < members.size(); ++j) out += w[static_cast<Eigen::Index>(j)] * psi[members[j]];
    return out;
}

/// x_k = sum_{l in N_k} c_kl psi_l for every bus.
inline std::vector<Vector> atc_combine(std::vector<Vector> const& psi, WeightMatrix const& weights,
                                       Topology const& t) {
    std::vector<Vector> x;
    x.reserve(t.num_buses());
    for (BusIndex k = 0; k < t.num_buses(); ++k) {
        x.push_back(weighted_sum(psi, t.neighborhood(k), weights.row_over_neighborhood(t, k)));
    }
    return x;
}

/// Subset of N_k chosen by the exhaustive search, as a bitmask over
/// neighborhood positions, together with the members, combination weights,
/// resulting estimate and the instantaneous error z_k - h_k^T x.
struct SubsetChoice {
    std::uint32_t mask = 0;
    std::vector<BusIndex> members;
    Eigen::VectorXd weights;
    Vector estimate;
    double error = 0.0;
};

inline constexpr std::size_t kMaxExhaustiveNeighborhood = 24;

namespace detail {

// Candidate ordering for equal scores: fewer members first, then the
// lexicographically smaller sorted member list.
inline bool subset_precedes(std::uint32_t a, std::uint32_t b) {
    int const pa = std::popcount(a);
    int const pb = std::popcount(b);
    if (pa != pb) return pa < pb;
    std::uint32_t const diff = a ^ b;
    return (a & (diff & (~diff + 1))) != 0;
}

}  // namespace detail

/// Exhaustive search over every nonempty subset of N_k for the combination
/// that best explains bus k's current measurement.
///
/// With `smoothing` = 0 candidates are ranked by |e|; otherwise by an
/// exponentially weighted average of e^2 kept in `scores` (one slot per
/// mask, created on first use).
inline SubsetChoice desta_select(Topology const& t, WeightMatrix const& weights, BusIndex k,
                                 std::vector<Vector> const& psi, MeasurementSample const& sample, bool renormalize,
                                 double smoothing = 0.0, std::vector<double>* scores = nullptr) {
    auto const& hood = t.neighborhood(k);
    std::size_t const size = hood.size();
    if (size > kMaxExhaustiveNeighborhood) {
        throw std::invalid_argument("neighborhood of bus " + std::to_string(k + 1) + " too large for exhaustive search");
    }
    Eigen::VectorXd const row = weights.row_over_neighborhood(t, k);
    Eigen::VectorXd proj(static_cast<Eigen::Index>(size));
    for (std::size_t j = 0; j < size; ++j) proj[static_cast<Eigen::Index>(j)] = sample.regressor.dot(psi[hood[j]]);

    std::uint32_t const full = (std::uint32_t{1} << size) - 1;
    bool const smoothed = smoothing > 0.0 && scores != nullptr;
    bool const first_use = smoothed && scores->size() != std::size_t{full} + 1;
    if (first_use) scores->assign(std::size_t{full} + 1, 0.0);

    std::uint32_t best = 0;
    double best_score = 0.0;
    double best_error = 0.0;
    for (std::uint32_t mask = 1; mask <= full; ++mask) {
        double total = 0.0;
        for (std::size_t j = 0; j < size; ++j) {
            if (mask & (std::uint32_t{1} << j)) total += row[static_cast<Eigen::Index>(j)];
        }
        if (renormalize && !(total > 0.0)) continue;
        double const scale = renormalize ? total : 1.0;
        double fitted = 0.0;
        for (std::size_t j = 0; j < size; ++j) {
            if (mask & (std::uint32_t{1} << j)) {
                fitted += (row[static_cast<Eigen::Index>(j)] / scale) * proj[static_cast<Eigen::Index>(j)];
            }
        }
        double const error = sample.value - fitted;
        double score = std::abs(error);
        if (smoothed) {
            double& s = (*scores)[mask];
            s = first_use ? error * error : smoothing * s + (1.0 - smoothing) * error * error;
            score = s;
        }
        if (best == 0 || score < best_score || (score == best_score && detail::subset_precedes(mask, best))) {
            best = mask;
            best_score = score;
            best_error = error;
        }
    }
    if (best == 0) throw std::invalid_argument("bus " + std::to_string(k + 1) + " has no weighted subset");

    SubsetChoice choice;
    choice.mask = best;
    std::vector<std::size_t> positions;
    for (std::size_t j = 0; j < size; ++j) {
        if (best & (std::uint32_t{1} << j)) {
            positions.push_back(j);
            choice.members.push_back(hood[j]);
        }
    }
    if (renormalize) {
        choice.weights = renormalize_over_subset(row, positions);
    } else {
        choice.weights.resize(static_cast<Eigen::Index>(positions.size()));
        for (std::size_t j = 0; j < positions.size(); ++j) {
            choice.weights[static_cast<Eigen::Index>(j)] = row[static_cast<Eigen::Index>(positions[j])];
        }
    }
    choice.estimate = weighted_sum(psi, choice.members, choice.weights);
    choice.error = best_error;
    return choice;
}

/// Errors e_l = z_k - h_k^T psi_l of every neighbor's intermediate estimate
/// against bus k's measurement, in neighborhood order.
inline Eigen::VectorXd neighbor_errors(Topology const& t, BusIndex k, std::vector<Vector> const& psi,
                                       MeasurementSample const& sample) {
    auto const& hood = t.neighborhood(k);
    Eigen::VectorXd e(static_cast<Eigen::Index>(hood.size()));
    for (std::size_t j = 0; j < hood.size(); ++j) {
        e[static_cast<Eigen::Index>(j)] = sample.value - sample.regressor.dot(psi[hood[j]]);
    }
    return e;
}

/// Sparsity-inspired combination at bus k: shift weight from the neighbor
/// with the largest error to the one with the smallest, then combine.
inline Vector dsita_combine_bus(Topology const& t, WeightMatrix const& weights, BusIndex k,
                                std::vector<Vector> const& psi, MeasurementSample const& sample, double rho,
                                double epsilon) {
    auto const adjusted =
        rza_adjust(weights.row_over_neighborhood(t, k), neighbor_errors(t, k, psi, sample), rho, epsilon);
    return weighted_sum(psi, t.neighborhood(k), adjusted.weights);
}

namespace detail {

inline void check_round(Topology const& t, EstimatorState const& state, std::span<MeasurementSample const> samples) {
    auto const n = t.num_buses();
    if (state.x.size() != n || state.psi.size() != n) throw std::invalid_argument("estimator state has wrong bus count");
    if (samples.size() != n) throw std::invalid_argument("expected one measurement per bus");
    for (BusIndex k = 0; k < n; ++k) {
        if (samples[k].bus != k) throw std::invalid_argument("measurements must be ordered by bus");
    }
}

inline void adapt_all(EstimatorState& state, std::span<MeasurementSample const> samples,
                      EstimatorParams const& params) {
    for (BusIndex k = 0; k < state.x.size(); ++k) state.psi[k] = adapt_step(state.x[k], samples[k], params.step_size(k));
}

}  // namespace detail

/// One DESTA round: adapt at every bus, then each bus combines over its
/// best subset.
inline void desta_step(EstimatorState& state, WeightMatrix const& weights, Topology const& t,
                       std::span<MeasurementSample const> samples, EstimatorParams const& params) {
    detail::check_round(t, state, samples);
    detail::adapt_all(state, samples, params);
    if (params.desta_smoothing > 0.0) state.desta_scores.resize(t.num_buses());
    for (BusIndex k = 0; k < t.num_buses(); ++k) {
        auto* scores = params.desta_smoothing > 0.0 ? &state.desta_scores[k] : nullptr;
        state.x[k] = desta_select(t, weights, k, state.psi, samples[k], params.desta_renormalize,
                                  params.desta_smoothing, scores)
                         .estimate;
    }
}

inline void dsita_step(EstimatorState& state, WeightMatrix const& weights, Topology const& t,
                       std::span<MeasurementSample const> samples, EstimatorParams const& params) {
    detail::check_round(t, state, samples);
    detail::adapt_all(state, samples, params);
    for (BusIndex k = 0; k < t.num_buses(); ++k) {
        state.x[k] = dsita_combine_bus(t, weights, k, state.psi, samples[k], params.rho, params.epsilon);
    }
}

inline void atc_step(EstimatorState& state, WeightMatrix const& weights, Topology const& t,
                     std::span<MeasurementSample const> samples, EstimatorParams const& params) {
    detail::check_round(t, state, samples);
    detail::adapt_all(state, samples, params);
    state.x = atc_combine(state.psi, weights, t);
}

/// Area-level coordinated update
///
///     x_n <- x_n - beta(i) sum_{m adjacent to n} (x_n - x_m)
///                + alpha(i) H_n^T (z_n - H_n x_n)
///
/// where H_n, z_n stack the current measurements of area n's buses. All
/// buses of an area carry the area estimate.
inline void mcse_step(EstimatorState& state, Topology const& t, EstimatorParams const& params,
                      std::span<MeasurementSample const> samples) {
    detail::check_round(t, state, samples);
    auto const& areas = t.areas();
    if (areas.empty()) throw std::invalid_argument("M-CSE needs an area partition");

    double const alpha = params.mcse_alpha.at(state.iteration);
    double const beta = params.mcse_beta.at(state.iteration);

    std::vector<Vector> area_x;
    area_x.reserve(areas.size());
    for (auto const& area : areas) area_x.push_back(state.x[area.front()]);

    std::vector<Vector> next(areas.size());
    for (std::size_t a = 0; a < areas.size(); ++a) {
        Vector const& xa = area_x[a];
        Vector consensus = Vector::Zero(xa.size());
        for (std::size_t m : adjacent_areas(t, a)) consensus += xa - area_x[m];
        Vector gradient = Vector::Zero(xa.size());
        for (BusIndex k : areas[a]) {
            auto const& s = samples[k];
            gradient += (s.value - s.regressor.dot(xa)) * s.regressor;
        }
        next[a] = xa - beta * consensus + alpha * gradient;
    }
    for (std::size_t a = 0; a < areas.size(); ++a) {
        for (BusIndex k : areas[a]) {
            state.x[k] = next[a];
            state.psi[k] = next[a];
        }
    }
}

/// Advances `state` by one synchronous round: every adaptation finishes
/// before any combination reads psi.
inline void run_iteration(Algorithm algorithm, EstimatorState& state, WeightMatrix const& weights, Topology const& t,
                          std::span<MeasurementSample const> samples, EstimatorParams const& params) {
    switch (algorithm) {
        case Algorithm::atc: atc_step(state, weights, t, samples, params); break;
        case Algorithm::mcse: mcse_step(state, t, params, samples); break;
        case Algorithm::desta: desta_step(state, weights, t, samples, params); break;
        case Algorithm::dsita: dsita_step(state, weights, t, samples, params); break;
        default: throw std::invalid_argument("unknown algorithm");
    }
    ++state.iteration;
}

}  // namespace gridest
