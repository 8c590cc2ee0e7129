#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "gridest/topology.hpp"

namespace gridest {

/// Row-stochastic combination weights c_kl supported on the self-inclusive
/// neighborhoods of a topology.
class WeightMatrix {
  public:
    WeightMatrix() = default;
    explicit WeightMatrix(Eigen::MatrixXd c) : c_(std::move(c)) {}

    double operator()(BusIndex k, BusIndex l) const {
        return c_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
    }
    Eigen::MatrixXd const& matrix() const noexcept { return c_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(c_.rows()); }

    /// Weights of row k restricted to N_k, in neighborhood order.
    Eigen::VectorXd row_over_neighborhood(Topology const& t, BusIndex k) const {
        auto const& n = t.neighborhood(k);
        Eigen::VectorXd w(static_cast<Eigen::Index>(n.size()));
        for (std::size_t j = 0; j < n.size(); ++j) w[static_cast<Eigen::Index>(j)] = (*this)(k, n[j]);
        return w;
    }

    /// True when every row sums to one within `tol`, entries lie in [0, 1],
    /// and nothing sits outside the neighborhoods of `t`.
    bool is_valid_for(Topology const& t, double tol = 1e-12) const {
        auto const n = t.num_buses();
        if (size() != n || static_cast<std::size_t>(c_.cols()) != n) return false;
        for (BusIndex k = 0; k < n; ++k) {
            double sum = 0.0;
            for (BusIndex l = 0; l < n; ++l) {
                double const v = (*this)(k, l);
                if (!(v >= 0.0 && v <= 1.0)) return false;
                if (v != 0.0 && l != k && !t.linked(k, l)) return false;
                sum += v;
            }
            if (std::abs(sum - 1.0) > tol) return false;
        }
        return true;
    }

  private:
    Eigen::MatrixXd c_;
};

enum class CombinationRule { hastings, metropolis };

inline std::string_view to_string(CombinationRule rule) {
    return rule == CombinationRule::hastings ? "hastings" : "metropolis";
}

inline CombinationRule parse_combination_rule(std::string_view name) {
    if (name == "hastings") return CombinationRule::hastings;
    if (name == "metropolis") return CombinationRule::metropolis;
    throw std::invalid_argument("unknown combiner '" + std::string(name) + "'");
}

namespace detail {

// Fills the off-diagonal entries from `offdiag(k, l)` and sets each diagonal
// to the complement of its row.
template <typename OffDiagonal>
WeightMatrix build_weights(Topology const& t, OffDiagonal offdiag) {
    auto const n = static_cast<Eigen::Index>(t.num_buses());
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
    for (BusIndex k = 0; k < t.num_buses(); ++k) {
        double sum = 0.0;
        for (BusIndex l : t.neighborhood(k)) {
            if (l == k) continue;
            double const w = offdiag(k, l);
            c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = w;
            sum += w;
        }
        c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = 1.0 - sum;
    }
    return WeightMatrix(std::move(c));
}

}  // namespace detail

/// c_kl = 1 / max(|N_k|, |N_l|) for linked k != l.
inline WeightMatrix metropolis_weights(Topology const& t) {
    return detail::build_weights(t, [&](BusIndex k, BusIndex l) {
        auto const nk = static_cast<double>(t.neighborhood(k).size());
        auto const nl = static_cast<double>(t.neighborhood(l).size());
        return 1.0 / std::max(nk, nl);
    });
}

/// Hastings rule: c_kl = s_k / max(|N_k| s_k, |N_l| s_l) for linked k != l,
/// with s the per-bus noise variance. Evaluated as
/// 1 / max(|N_k|, |N_l| s_l / s_k), which is the same quantity and makes
/// uniform variances reproduce metropolis_weights bit for bit.
inline WeightMatrix hastings_weights(Topology const& t) {
    for (BusIndex k = 0; k < t.num_buses(); ++k) {
        if (!(t.noise_variance(k) > 0.0)) {
            throw std::invalid_argument("Hastings rule needs positive noise variance (bus " + std::to_string(k + 1) +
                                        ")");
        }
    }
    return detail::build_weights(t, [&](BusIndex k, BusIndex l) {
        auto const nk = static_cast<double>(t.neighborhood(k).size());
        auto const nl = static_cast<double>(t.neighborhood(l).size());
        return 1.0 / std::max(nk, nl * (t.noise_variance(l) / t.noise_variance(k)));
    });
}

inline WeightMatrix combination_weights(Topology const& t, CombinationRule rule) {
    return rule == CombinationRule::hastings ? hastings_weights(t) : metropolis_weights(t);
}

/// Restricts a neighborhood weight row to the entries at `positions` and
/// rescales them to sum to one.
inline Eigen::VectorXd renormalize_over_subset(Eigen::VectorXd const& weights, std::span<std::size_t const> positions) {
    if (positions.empty()) throw std::invalid_argument("subset must be nonempty");
    double total = 0.0;
    for (auto p : positions) {
        if (p >= static_cast<std::size_t>(weights.size())) throw std::out_of_range("subset position outside row");
        total += weights[static_cast<Eigen::Index>(p)];
    }
    if (!(total > 0.0)) throw std::invalid_argument("subset carries no combination weight");
    Eigen::VectorXd out(static_cast<Eigen::Index>(positions.size()));
    for (std::size_t j = 0; j < positions.size(); ++j) {
        out[static_cast<Eigen::Index>(j)] = weights[static_cast<Eigen::Index>(positions[j])] / total;
    }
    return out;
}

struct RzaAdjustment {
    Eigen::VectorXd weights;
    std::size_t penalized = 0;  // position with the largest |e|
    std::size_t rewarded = 0;   // position with the smallest |e|
    double shrinkage = 0.0;     // rho * epsilon / (1 + epsilon |xi_min|)
    double transferred = 0.0;   // shrinkage clamped to the penalized weight
};

/// Reweighted zero-attraction adjustment of one neighborhood's weights.
///
/// The modified error vector keeps +|e| at the largest-magnitude entry,
/// -|e| at the smallest and zero elsewhere, so only those two weights move:
/// the worst neighbor loses `shrinkage` and the best one gains it. The
/// transfer is capped at the worst neighbor's current weight to keep every
/// entry in [0, 1]. Ties go to the lowest position.
inline RzaAdjustment rza_adjust(Eigen::VectorXd const& weights, Eigen::VectorXd const& errors, double rho,
                                double epsilon) {
    if (weights.size() != errors.size() || weights.size() == 0) {
        throw std::invalid_argument("weight and error vectors must be nonempty and of equal length");
    }
    if (!(rho >= 0.0) || !(epsilon >= 0.0) || !std::isfinite(rho) || !std::isfinite(epsilon)) {
        throw std::invalid_argument("rho and epsilon must be finite and nonnegative");
    }

    RzaAdjustment out;
    out.weights = weights;
    for (Eigen::Index j = 1; j < errors.size(); ++j) {
        double const mag = std::abs(errors[j]);
        if (mag > std::abs(errors[static_cast<Eigen::Index>(out.penalized)])) out.penalized = static_cast<std::size_t>(j);
        if (mag < std::abs(errors[static_cast<Eigen::Index>(out.rewarded)])) out.rewarded = static_cast<std::size_t>(j);
    }
    double const xi_min = std::abs(errors[static_cast<Eigen::Index>(out.rewarded)]);
    out.shrinkage = rho * epsilon / (1.0 + epsilon * xi_min);
    if (out.penalized == out.rewarded) return out;

    auto const worst = static_cast<Eigen::Index>(out.penalized);
    auto const best = static_cast<Eigen::Index>(out.rewarded);
    out.transferred = std::min(out.shrinkage, out.weights[worst]);
    out.weights[worst] -= out.transferred;
    out.weights[best] += out.transferred;
    return out;
}

}  // namespace gridest
