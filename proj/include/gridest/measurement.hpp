#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridest/topology.hpp"

namespace gridest {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Scalar measurement z_k(i) = h_k(i)^T theta + e_k(i) taken at one bus.
struct MeasurementSample {
    Vector regressor;
    double value = 0.0;
    BusIndex bus = 0;
    std::size_t iteration = 0;
};

enum class RegressorKind {
    dc_jacobian,      // fixed DC power-injection row, unit branch susceptance
    random_gaussian,  // i.i.d. N(0, stddev^2) entries redrawn every iteration
};

struct RegressorScheme {
    RegressorKind kind = RegressorKind::random_gaussian;
    double stddev = 1.0;

    friend bool operator==(RegressorScheme const&, RegressorScheme const&) = default;
};

inline std::string_view to_string(RegressorKind kind) {
    return kind == RegressorKind::dc_jacobian ? "dc-jacobian" : "random-gaussian";
}

inline RegressorKind parse_regressor_kind(std::string_view name) {
    if (name == "dc-jacobian") return RegressorKind::dc_jacobian;
    if (name == "random-gaussian") return RegressorKind::random_gaussian;
    throw std::invalid_argument("unknown regressor scheme '" + std::string(name) + "'");
}

/// Row k of the DC power-injection Jacobian with every branch at j1.0 p.u.:
/// deg(k) on the diagonal, -1 per neighbor. This is row k of the graph
/// Laplacian, so it sums to zero.
inline Vector dc_jacobian_row(Topology const& t, BusIndex k) {
    Vector row = Vector::Zero(static_cast<Eigen::Index>(t.num_buses()));
    for (BusIndex l : t.neighborhood(k)) {
        row[static_cast<Eigen::Index>(l)] = (l == k) ? static_cast<double>(t.degree(k)) : -1.0;
    }
    return row;
}

inline Matrix dc_jacobian(Topology const& t) {
    auto const n = static_cast<Eigen::Index>(t.num_buses());
    Matrix h(n, n);
    for (BusIndex k = 0; k < t.num_buses(); ++k) h.row(static_cast<Eigen::Index>(k)) = dc_jacobian_row(t, k);
    return h;
}

/// Random stream owned by one bus within one Monte Carlo run.
///
/// Seeded from the 32-bit words of (master seed, run, bus), so a run's
/// draws depend only on its own index and adding runs never perturbs
/// existing ones. Each iteration consumes a fixed number of standard
/// normal draws regardless of the noise variance.
class MeasurementStream {
  public:
    MeasurementStream(std::uint64_t master_seed, std::uint64_t run, BusIndex bus) {
        auto const b = static_cast<std::uint64_t>(bus);
        std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                          static_cast<std::uint32_t>(run),         static_cast<std::uint32_t>(run >> 32),
                          static_cast<std::uint32_t>(b),           static_cast<std::uint32_t>(b >> 32)};
        engine_.seed(seq);
    }

    double standard_normal() { return normal_(engine_); }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Draws bus k's measurement for iteration `iteration` from `rng`, which must
/// be bus k's stream advanced through iterations [0, iteration).
inline MeasurementSample sample_measurement(Topology const& t, Vector const& theta, RegressorScheme const& scheme,
                                            BusIndex k, std::size_t iteration, MeasurementStream& rng) {
    auto const n = static_cast<Eigen::Index>(t.num_buses());
    if (theta.size() != n) throw std::invalid_argument("state vector length does not match bus count");

    MeasurementSample s;
    s.bus = k;
    s.iteration = iteration;
    if (scheme.kind == RegressorKind::dc_jacobian) {
        s.regressor = dc_jacobian_row(t, k);
    } else {
        s.regressor.resize(n);
        for (Eigen::Index j = 0; j < n; ++j) s.regressor[j] = scheme.stddev * rng.standard_normal();
    }
    double const noise = std::sqrt(t.noise_variance(k)) * rng.standard_normal();
    s.value = s.regressor.dot(theta) + noise;
    return s;
}

/// Measurement generator for one Monte Carlo run: one stream per bus,
/// producing a full round of samples per call.
class MeasurementSource {
  public:
    MeasurementSource(Topology const& t, Vector theta, RegressorScheme scheme, std::uint64_t master_seed,
                      std::uint64_t run)
        : topology_(&t), theta_(std::move(theta)), scheme_(scheme) {
        streams_.reserve(t.num_buses());
        for (BusIndex k = 0; k < t.num_buses(); ++k) streams_.emplace_back(master_seed, run, k);
    }

    std::vector<MeasurementSample> next_round() {
        std::vector<MeasurementSample> round;
        round.reserve(streams_.size());
        for (BusIndex k = 0; k < streams_.size(); ++k) {
            round.push_back(sample_measurement(*topology_, theta_, scheme_, k, iteration_, streams_[k]));
        }
        ++iteration_;
        return round;
    }

    std::size_t iteration() const noexcept { return iteration_; }

  private:
    Topology const* topology_;
    Vector theta_;
    RegressorScheme scheme_;
    std::vector<MeasurementStream> streams_;
    std::size_t iteration_ = 0;
};

}  // namespace gridest
