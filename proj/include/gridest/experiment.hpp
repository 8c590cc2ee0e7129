#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gridest/combiner.hpp"
#include "gridest/estimators.hpp"
#include "gridest/measurement.hpp"
#include "gridest/metrics.hpp"
#include "gridest/topology.hpp"
#include "gridest/topology_io.hpp"

namespace gridest {

/// Everything needed to reproduce one Monte Carlo experiment. Defaults are
/// the IEEE 14-bus reference setup.
struct ExperimentConfig {
    std::string topology = "ieee14";          // preset name or topology file
    std::optional<double> noise_variance;     // overrides every bus's variance
    Algorithm algorithm = Algorithm::atc;
    CombinationRule combiner = CombinationRule::hastings;
    EstimatorParams params;
    RegressorScheme regressors;
    std::optional<std::vector<double>> theta;  // nullopt = all ones
    std::size_t iterations = 1000;
    std::size_t runs = 100;
    std::uint64_t seed = 1;
    std::string output = "results.csv";
    GapDefinition gap_definition = GapDefinition::own_angle;
    std::vector<BusIndex> gap_buses{4};       // bus 5

    std::filesystem::path base_dir;           // resolves relative topology paths; not echoed

    friend bool operator==(ExperimentConfig const& a, ExperimentConfig const& b) {
        return a.topology == b.topology && a.noise_variance == b.noise_variance && a.algorithm == b.algorithm &&
               a.combiner == b.combiner && a.params == b.params && a.regressors == b.regressors &&
               a.theta == b.theta && a.iterations == b.iterations && a.runs == b.runs && a.seed == b.seed &&
               a.output == b.output && a.gap_definition == b.gap_definition && a.gap_buses == b.gap_buses;
    }
};

namespace detail {

inline std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(17);
    os << v;
    return os.str();
}

// TOML float literal (always carries a '.' or exponent).
inline std::string toml_real(double v) {
    auto s = format_real(v);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

inline std::string toml_string(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

inline std::string toml_reals(std::vector<double> const& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + toml_real(v[i]);
    return out + "]";
}

inline std::string as_string(toml::node const& node, std::string_view key, std::string_view source) {
    if (auto v = node.value_exact<std::string>()) return *v;
    fail(source, node, "'" + std::string(key) + "' must be a string");
}

inline bool as_bool(toml::node const& node, std::string_view key, std::string_view source) {
    if (auto v = node.value_exact<bool>()) return *v;
    fail(source, node, "'" + std::string(key) + "' must be true or false");
}

inline std::size_t as_positive(toml::node const& node, std::string_view key, std::string_view source) {
    auto const v = as_integer(node, key, source);
    if (v < 1) fail(source, node, "'" + std::string(key) + "' must be at least 1");
    return static_cast<std::size_t>(v);
}

template <typename Parse>
auto parse_enum(toml::node const& node, std::string_view key, std::string_view source, Parse parse) {
    try {
        return parse(as_string(node, key, source));
    } catch (std::invalid_argument const& e) {
        fail(source, node, e.what());
    }
}

}  // namespace detail

/// Parses an experiment document. Recognized keys:
///
///     topology, noise_variance, algorithm, combiner, mu, mu_per_bus, rho,
///     epsilon, desta_renormalize, desta_smoothing, mcse_alpha,
///     mcse_alpha_decay, mcse_beta, mcse_beta_decay, regressors,
///     regressor_std, theta, iterations, runs, seed, output,
///     gap_definition, gap_buses
///
/// Anything else is rejected. `mcse_alpha` and `mcse_beta` default to `mu`.
/// Bus numbers in `gap_buses` are one-based.
inline ExperimentConfig parse_experiment_config(std::string_view text, std::string_view source = "<config>",
                                                std::filesystem::path base_dir = {}) {
    using namespace detail;
    auto const doc = parse_document(text, source);
    reject_unknown_keys(doc,
                        {"topology", "noise_variance", "algorithm", "combiner", "mu", "mu_per_bus", "rho", "epsilon",
                         "desta_renormalize", "desta_smoothing", "mcse_alpha", "mcse_alpha_decay", "mcse_beta",
                         "mcse_beta_decay", "regressors", "regressor_std", "theta", "iterations", "runs", "seed",
                         "output", "gap_definition", "gap_buses"},
                        source);

    ExperimentConfig cfg;
    cfg.base_dir = std::move(base_dir);
    auto positive_real = [&](std::string_view key, double& out) {
        if (auto const* n = doc.get(key)) {
            out = as_real(*n, key, source);
            if (!(out > 0.0) || !std::isfinite(out)) fail(source, *n, "'" + std::string(key) + "' must be positive");
        }
    };
    auto nonneg_real = [&](std::string_view key, double& out) {
        if (auto const* n = doc.get(key)) {
            out = as_real(*n, key, source);
            if (!(out >= 0.0) || !std::isfinite(out)) fail(source, *n, "'" + std::string(key) + "' must be nonnegative");
        }
    };

    if (auto const* n = doc.get("topology")) cfg.topology = as_string(*n, "topology", source);
    if (doc.contains("noise_variance")) {
        double v = 0.0;
        nonneg_real("noise_variance", v);
        cfg.noise_variance = v;
    }
    if (auto const* n = doc.get("algorithm")) cfg.algorithm = parse_enum(*n, "algorithm", source, parse_algorithm);
    if (auto const* n = doc.get("combiner")) cfg.combiner = parse_enum(*n, "combiner", source, parse_combination_rule);

    positive_real("mu", cfg.params.mu);
    if (auto const* n = doc.get("mu_per_bus")) {
        cfg.params.mu_per_bus = real_list(*n, "mu_per_bus", source);
        for (double m : cfg.params.mu_per_bus) {
            if (!(m > 0.0) || !std::isfinite(m)) fail(source, *n, "'mu_per_bus' entries must be positive");
        }
    }
    nonneg_real("rho", cfg.params.rho);
    nonneg_real("epsilon", cfg.params.epsilon);
    if (auto const* n = doc.get("desta_renormalize")) cfg.params.desta_renormalize = as_bool(*n, "desta_renormalize", source);
    if (auto const* n = doc.get("desta_smoothing")) {
        cfg.params.desta_smoothing = as_real(*n, "desta_smoothing", source);
        if (!(cfg.params.desta_smoothing >= 0.0 && cfg.params.desta_smoothing < 1.0)) {
            fail(source, *n, "'desta_smoothing' must lie in [0, 1)");
        }
    }
    cfg.params.mcse_alpha = {cfg.params.mu, 0.0};
    cfg.params.mcse_beta = {cfg.params.mu, 0.0};
    nonneg_real("mcse_alpha", cfg.params.mcse_alpha.initial);
    nonneg_real("mcse_alpha_decay", cfg.params.mcse_alpha.decay);
    nonneg_real("mcse_beta", cfg.params.mcse_beta.initial);
    nonneg_real("mcse_beta_decay", cfg.params.mcse_beta.decay);

    if (auto const* n = doc.get("regressors")) cfg.regressors.kind = parse_enum(*n, "regressors", source, parse_regressor_kind);
    positive_real("regressor_std", cfg.regressors.stddev);

    if (auto const* n = doc.get("theta")) {
        if (n->is_string()) {
            if (as_string(*n, "theta", source) != "ones") fail(source, *n, "'theta' must be \"ones\" or an array");
        } else {
            cfg.theta = real_list(*n, "theta", source);
            for (double v : *cfg.theta) {
                if (!std::isfinite(v)) fail(source, *n, "'theta' entries must be finite");
            }
        }
    }
    if (auto const* n = doc.get("iterations")) cfg.iterations = as_positive(*n, "iterations", source);
    if (auto const* n = doc.get("runs")) cfg.runs = as_positive(*n, "runs", source);
    if (auto const* n = doc.get("seed")) {
        auto const v = as_integer(*n, "seed", source);
        if (v < 0) fail(source, *n, "'seed' must be nonnegative");
        cfg.seed = static_cast<std::uint64_t>(v);
    }
    if (auto const* n = doc.get("output")) cfg.output = as_string(*n, "output", source);
    if (auto const* n = doc.get("gap_definition")) {
        cfg.gap_definition = parse_enum(*n, "gap_definition", source, parse_gap_definition);
    }
    if (auto const* n = doc.get("gap_buses")) {
        cfg.gap_buses.clear();
        for (auto const& item : as_array(*n, "gap_buses", source)) {
            auto const b = as_integer(item, "gap_buses", source);
            if (b < 1) fail(source, item, "'gap_buses' entries are one-based bus numbers");
            cfg.gap_buses.push_back(static_cast<BusIndex>(b - 1));
        }
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(std::filesystem::path const& path) {
    return parse_experiment_config(detail::read_file(path), path.string(), path.parent_path());
}

/// Canonical text of a resolved config: every key, fixed order, full
/// precision. Parsing it back yields an equal config.
inline std::string config_echo(ExperimentConfig const& cfg) {
    using namespace detail;
    std::ostringstream os;
    os << "topology = " << toml_string(cfg.topology) << "\n";
    if (cfg.noise_variance) os << "noise_variance = " << toml_real(*cfg.noise_variance) << "\n";
    os << "algorithm = " << toml_string(to_string(cfg.algorithm)) << "\n";
    os << "combiner = " << toml_string(to_string(cfg.combiner)) << "\n";
    os << "mu = " << toml_real(cfg.params.mu) << "\n";
    if (!cfg.params.mu_per_bus.empty()) os << "mu_per_bus = " << toml_reals(cfg.params.mu_per_bus) << "\n";
    os << "rho = " << toml_real(cfg.params.rho) << "\n";
    os << "epsilon = " << toml_real(cfg.params.epsilon) << "\n";
    os << "desta_renormalize = " << (cfg.params.desta_renormalize ? "true" : "false") << "\n";
    os << "desta_smoothing = " << toml_real(cfg.params.desta_smoothing) << "\n";
    os << "mcse_alpha = " << toml_real(cfg.params.mcse_alpha.initial) << "\n";
    os << "mcse_alpha_decay = " << toml_real(cfg.params.mcse_alpha.decay) << "\n";
    os << "mcse_beta = " << toml_real(cfg.params.mcse_beta.initial) << "\n";
    os << "mcse_beta_decay = " << toml_real(cfg.params.mcse_beta.decay) << "\n";
    os << "regressors = " << toml_string(to_string(cfg.regressors.kind)) << "\n";
    os << "regressor_std = " << toml_real(cfg.regressors.stddev) << "\n";
    if (cfg.theta) {
        os << "theta = " << toml_reals(*cfg.theta) << "\n";
    } else {
        os << "theta = \"ones\"\n";
    }
    os << "iterations = " << cfg.iterations << "\n";
    os << "runs = " << cfg.runs << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "output = " << toml_string(cfg.output) << "\n";
    os << "gap_definition = " << toml_string(to_string(cfg.gap_definition)) << "\n";
    os << "gap_buses = [";
    for (std::size_t i = 0; i < cfg.gap_buses.size(); ++i) os << (i ? ", " : "") << cfg.gap_buses[i] + 1;
    os << "]\n";
    return os.str();
}

/// Topology with any configured variance override applied.
inline Topology experiment_topology(ExperimentConfig const& cfg) {
    auto t = resolve_topology(cfg.topology, cfg.base_dir);
    return cfg.noise_variance ? t.with_uniform_noise(*cfg.noise_variance) : t;
}

inline Vector experiment_theta(ExperimentConfig const& cfg, std::size_t num_buses) {
    auto const n = static_cast<Eigen::Index>(num_buses);
    if (!cfg.theta) return Vector::Ones(n);
    if (cfg.theta->size() != num_buses) {
        throw ConfigError("'theta' has " + std::to_string(cfg.theta->size()) + " entries, topology has " +
                          std::to_string(num_buses) + " buses");
    }
    return Eigen::Map<Vector const>(cfg.theta->data(), n);
}

/// Checks the config against its topology; throws ConfigError on failure.
inline void validate(ExperimentConfig const& cfg, Topology const& t) {
    if (cfg.iterations < 1 || cfg.runs < 1) throw ConfigError("iterations and runs must be at least 1");
    if (!cfg.params.mu_per_bus.empty() && cfg.params.mu_per_bus.size() != t.num_buses()) {
        throw ConfigError("'mu_per_bus' must list one step size per bus");
    }
    for (BusIndex b : cfg.gap_buses) {
        if (b >= t.num_buses()) throw ConfigError("gap bus " + std::to_string(b + 1) + " is not in the topology");
    }
    (void)experiment_theta(cfg, t.num_buses());
}

struct ResultBundle {
    MetricsTrace trace;
    std::string label;
    std::string config_echo;
    double wall_seconds = 0.0;
};

/// One seeded trajectory. Run r draws only from streams keyed by
/// (seed, r, bus), so its result is independent of every other run.
inline MetricsTrace run_trajectory(ExperimentConfig const& cfg, Topology const& t, WeightMatrix const& weights,
                                   Vector const& theta, std::size_t run) {
    MeasurementSource source(t, theta, cfg.regressors, cfg.seed, run);
    auto state = EstimatorState::zeros(t.num_buses());
    TraceRecorder recorder(theta, cfg.gap_buses, cfg.gap_definition, cfg.iterations);
    recorder.record_initial(state.x);
    for (std::size_t i = 0; i < cfg.iterations; ++i) {
        auto const samples = source.next_round();
        run_iteration(cfg.algorithm, state, weights, t, samples, cfg.params);
        recorder.record(state.x);
    }
    return std::move(recorder).take();
}

/// Executes `cfg.runs` independent trajectories and averages their traces.
/// `threads` > 1 spreads runs over worker threads; the output is identical
/// to a single-threaded execution.
inline ResultBundle run_experiment(ExperimentConfig const& cfg, unsigned threads = 1) {
    auto const start = std::chrono::steady_clock::now();
    auto const t = experiment_topology(cfg);
    validate(cfg, t);
    auto const theta = experiment_theta(cfg, t.num_buses());
    // M-CSE exchanges estimates without combination weights.
    WeightMatrix const weights =
        cfg.algorithm == Algorithm::mcse ? WeightMatrix{} : combination_weights(t, cfg.combiner);

    std::vector<MetricsTrace> traces(cfg.runs);
    threads = std::clamp<unsigned>(threads, 1u, static_cast<unsigned>(cfg.runs));
    if (threads == 1) {
        for (std::size_t r = 0; r < cfg.runs; ++r) traces[r] = run_trajectory(cfg, t, weights, theta, r);
    } else {
        std::vector<std::exception_ptr> errors(threads);
        {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < threads; ++w) {
                pool.emplace_back([&, w] {
                    try {
                        for (std::size_t r = w; r < cfg.runs; r += threads) {
                            traces[r] = run_trajectory(cfg, t, weights, theta, r);
                        }
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
        }
        for (auto const& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    ResultBundle bundle;
    bundle.trace = average_traces(traces);
    bundle.label = std::string(to_string(cfg.algorithm));
    bundle.config_echo = config_echo(cfg);
    bundle.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return bundle;
}

inline double to_db(double linear) { return 10.0 * std::log10(linear); }

/// CSV text: header, then one row per iteration (1-based) with the linear
/// and dB network MSE and the gap at each recorded bus.
inline std::string format_csv(ResultBundle const& bundle) {
    using detail::format_real;
    auto const& tr = bundle.trace;
    std::ostringstream os;
    os << "iteration,mse_linear,mse_db";
    for (BusIndex b : tr.gap_buses) os << ",gap_bus_" << b + 1;
    os << "\n";
    for (std::size_t i = 0; i < tr.iterations(); ++i) {
        os << i + 1 << "," << format_real(tr.mse[i]) << "," << format_real(to_db(tr.mse[i]));
        for (auto const& g : tr.gap) os << "," << format_real(g[i]);
        os << "\n";
    }
    return os.str();
}

inline void write_text(std::filesystem::path const& path, std::string const& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline void export_csv(ResultBundle const& bundle, std::filesystem::path const& path) {
    write_text(path, format_csv(bundle));
}

/// Multi-algorithm comparison sharing one measurement setup.
struct Comparison {
    std::vector<ResultBundle> results;
    BusIndex bus = 4;
};

/// Runs every config and checks they differ only in their algorithm
/// settings (algorithm, combiner, estimator parameters). All traces record
/// the gap at `bus`.
inline Comparison compare_experiments(std::vector<ExperimentConfig> cfgs, BusIndex bus = 4, unsigned threads = 1) {
    if (cfgs.empty()) throw ConfigError("nothing to compare");
    auto const& ref = cfgs.front();
    for (auto const& c : cfgs) {
        if (c.topology != ref.topology || c.base_dir != ref.base_dir || c.noise_variance != ref.noise_variance ||
            c.regressors != ref.regressors || c.theta != ref.theta || c.iterations != ref.iterations ||
            c.runs != ref.runs || c.seed != ref.seed || c.gap_definition != ref.gap_definition) {
            throw ConfigError("compared configs must share topology, measurements, iterations, runs and seed");
        }
    }
    Comparison out;
    out.bus = bus;
    std::set<std::string> labels;
    for (auto& c : cfgs) {
        c.gap_buses = {bus};
        auto bundle = run_experiment(c, threads);
        std::string label = bundle.label;
        for (int n = 2; labels.contains(label); ++n) label = bundle.label + "_" + std::to_string(n);
        labels.insert(label);
        bundle.label = label;
        out.results.push_back(std::move(bundle));
    }
    return out;
}

/// Columns: iteration, mse_<label>..., gap_bus<k>_<label>... (linear MSE).
inline std::string format_comparison_csv(Comparison const& cmp) {
    using detail::format_real;
    std::ostringstream os;
    os << "iteration";
    for (auto const& r : cmp.results) os << ",mse_" << r.label;
    for (auto const& r : cmp.results) os << ",gap_bus" << cmp.bus + 1 << "_" << r.label;
    os << "\n";
    std::size_t const n = cmp.results.front().trace.iterations();
    for (std::size_t i = 0; i < n; ++i) {
        os << i + 1;
        for (auto const& r : cmp.results) os << "," << format_real(r.trace.mse[i]);
        for (auto const& r : cmp.results) os << "," << format_real(r.trace.gap.front()[i]);
        os << "\n";
    }
    return os.str();
}

/// Python/matplotlib script that plots the comparison CSV: MSE in dB and
/// the phase-angle gap of the designated bus, one curve per algorithm.
inline std::string plot_script(Comparison const& cmp, std::string const& csv_name) {
    std::ostringstream labels;
    for (std::size_t i = 0; i < cmp.results.size(); ++i) labels << (i ? ", " : "") << '"' << cmp.results[i].label << '"';
    auto const bus = std::to_string(cmp.bus + 1);
    std::ostringstream os;
    os << "#!/usr/bin/env python3\n"
          "import csv\nimport math\nimport os\n\n"
          "import matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n"
          "HERE = os.path.dirname(os.path.abspath(__file__))\n"
          "CSV = os.path.join(HERE, "
       << detail::toml_string(csv_name)
       << ")\n"
          "LABELS = ["
       << labels.str()
       << "]\n"
          "BUS = "
       << bus
       << "\n\n"
          "with open(CSV, newline=\"\") as f:\n"
          "    rows = list(csv.DictReader(f))\n"
          "it = [int(r[\"iteration\"]) for r in rows]\n\n"
          "fig, ax = plt.subplots()\n"
          "for label in LABELS:\n"
          "    ax.plot(it, [10 * math.log10(float(r[\"mse_\" + label])) for r in rows], label=label.upper())\n"
          "ax.set_xlabel(\"iteration\")\nax.set_ylabel(\"MSE (dB)\")\nax.legend()\n"
          "fig.savefig(os.path.splitext(CSV)[0] + \"_mse.png\", dpi=150)\n\n"
          "fig, ax = plt.subplots()\n"
          "for label in LABELS:\n"
          "    ax.plot(it, [float(r[\"gap_bus%d_%s\" % (BUS, label)]) for r in rows], label=label.upper())\n"
          "ax.set_xlabel(\"iteration\")\nax.set_ylabel(\"phase angle gap, bus %d\" % BUS)\nax.legend()\n"
          "fig.savefig(os.path.splitext(CSV)[0] + \"_gap.png\", dpi=150)\n";
    return os.str();
}

}  // namespace gridest
