// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. All thresholds are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gridest/gridest.hpp"
#include "oracles/brute_force_desta.hpp"
#include "support/random_graphs.hpp"

using namespace gridest;

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kOracleTol = 1e-12;
constexpr double kTrajectoryTol = 1e-12;
constexpr double kMinDropDb = 20.0;
constexpr double kOrderingMarginDb = 0.5;
constexpr double kMaxRuntimeSeconds = 120.0;
constexpr double kGapFraction = 0.10;
constexpr std::size_t kGapDeadline = 90;
constexpr double kNoiselessMse = 1e-6;
constexpr std::size_t kNoiselessIterations = 5000;

struct Outcome {
    bool passed = true;
    std::vector<std::string> notes;

    void check(bool ok, std::string const& what) {
        passed = passed && ok;
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
};

int failures = 0;

void report(std::string const& name, Outcome const& o) {
    std::cout << (o.passed ? "[PASS] " : "[FAIL] ") << name << "\n";
    for (auto const& n : o.notes) std::cout << "         " << n << "\n";
    std::cout.flush();
    if (!o.passed) ++failures;
}

std::string fmt(double v, int precision = 3) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(precision);
    os << v;
    return os.str();
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

std::vector<double> to_std(Vector const& v) { return {v.data(), v.data() + v.size()}; }

ExperimentConfig reference_config(Algorithm alg) {
    ExperimentConfig cfg;
    cfg.topology = "ieee14";
    cfg.noise_variance = 0.001;
    cfg.algorithm = alg;
    cfg.regressors = {RegressorKind::random_gaussian, 1.0};
    cfg.params.mu = 0.018;
    cfg.params.rho = 0.07;
    cfg.params.epsilon = 10.0;
    cfg.params.mcse_alpha = {0.018, 0.0};
    cfg.params.mcse_beta = {0.018, 0.0};
    cfg.iterations = 1000;
    cfg.runs = 100;
    cfg.seed = 1;
    cfg.gap_buses = {4};
    return cfg;
}

constexpr Algorithm kAll[] = {Algorithm::atc, Algorithm::mcse, Algorithm::desta, Algorithm::dsita};

// ---------------------------------------------------------------------------

void weight_rules() {
    Outcome o;
    std::mt19937_64 rng(1001);
    int valid_h = 0, valid_m = 0, coincide = 0;
    int const graphs = 1000;
    for (int g = 0; g < graphs; ++g) {
        auto const t = test_support::random_topology(rng, 1, 10);
        valid_h += hastings_weights(t).is_valid_for(t, kRowSumTol);
        valid_m += metropolis_weights(t).is_valid_for(t, kRowSumTol);
        auto const uniform = t.with_uniform_noise(t.noise_variance(0));
        coincide += hastings_weights(uniform).matrix() == metropolis_weights(uniform).matrix();
    }
    o.check(valid_h == graphs, "Hastings row-stochastic/nonnegative/supported: " + std::to_string(valid_h) + "/1000");
    o.check(valid_m == graphs, "Metropolis row-stochastic/nonnegative/supported: " + std::to_string(valid_m) + "/1000");
    o.check(coincide == graphs, "uniform variances, rules identical entrywise: " + std::to_string(coincide) + "/1000");
    report("weight-rule correctness", o);
}

void desta_oracle() {
    Outcome o;
    std::mt19937_64 rng(2002);
    std::normal_distribution<double> g;
    int instances = 0, subset_match = 0;
    double worst = 0.0;
    std::map<std::size_t, int> sizes;
    while (instances < 500) {
        auto const t = test_support::random_topology(rng, 1, 9, 5);
        auto const n = t.num_buses();
        auto const dim = static_cast<Eigen::Index>(n);
        auto const c = hastings_weights(t);
        auto state = EstimatorState::zeros(n);
        for (auto& x : state.x) x = Vector::NullaryExpr(dim, [&] { return g(rng); });
        std::vector<MeasurementSample> samples(n);
        for (BusIndex k = 0; k < n; ++k) {
            samples[k].bus = k;
            samples[k].regressor = Vector::NullaryExpr(dim, [&] { return g(rng); });
            samples[k].value = g(rng);
        }
        EstimatorParams params;
        params.mu = 0.3;
        desta_step(state, c, t, samples, params);

        for (BusIndex k = 0; k < n && instances < 500; ++k, ++instances) {
            auto const& hood = t.neighborhood(k);
            ++sizes[hood.size()];
            std::vector<std::vector<double>> hood_psi;
            for (BusIndex l : hood) hood_psi.push_back(to_std(state.psi[l]));
            auto const ref = oracle::brute_force_desta(to_std(c.row_over_neighborhood(t, k)), hood_psi,
                                                       to_std(samples[k].regressor), samples[k].value, true);
            std::uint32_t ref_mask = 0;
            for (auto p : ref.positions) ref_mask |= std::uint32_t{1} << p;
            auto const choice = desta_select(t, c, k, state.psi, samples[k], true);
            subset_match += choice.mask == ref_mask;
            for (Eigen::Index d = 0; d < dim; ++d) {
                worst = std::max(worst, std::abs(state.x[k][d] - ref.estimate[static_cast<std::size_t>(d)]));
            }
        }
    }
    std::string mix;
    for (auto [sz, count] : sizes) mix += " T=" + std::to_string(sz) + ":" + std::to_string(count);
    o.check(subset_match == 500, "chosen subset identical: " + std::to_string(subset_match) + "/500 (" + mix + " )");
    o.check(worst <= kOracleTol, "max |x_k - oracle| = " + sci(worst) + " <= 1e-12");
    report("DESTA oracle equivalence", o);
}

void dsita_mechanics() {
    Outcome o;
    std::mt19937_64 rng(3003);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g;
    int sum_ok = 0, range_ok = 0, moves_ok = 0, moves_checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto const n = 1 + static_cast<Eigen::Index>(rng() % 8);
        Eigen::VectorXd w(n), e(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            w[j] = u(rng);
            e[j] = g(rng);
        }
        w /= w.sum();
        auto const r = rza_adjust(w, e, 0.2 * u(rng), 20.0 * u(rng));
        sum_ok += std::abs(r.weights.sum() - 1.0) <= kRowSumTol;
        range_ok += r.weights.minCoeff() >= 0.0 && r.weights.maxCoeff() <= 1.0;
        bool const unclamped = r.shrinkage > 0.0 && r.shrinkage < w[static_cast<Eigen::Index>(r.penalized)];
        if (unclamped && r.penalized != r.rewarded) {
            ++moves_checked;
            auto const worst = static_cast<Eigen::Index>(r.penalized);
            auto const best = static_cast<Eigen::Index>(r.rewarded);
            moves_ok += r.weights[worst] < w[worst] && r.weights[best] > w[best];
        }
    }
    o.check(sum_ok == 1000, "sum to one within 1e-12: " + std::to_string(sum_ok) + "/1000");
    o.check(range_ok == 1000, "entries in [0,1]: " + std::to_string(range_ok) + "/1000");
    o.check(moves_checked > 0 && moves_ok == moves_checked,
            "max-|e| weight down, min-|e| weight up: " + std::to_string(moves_ok) + "/" + std::to_string(moves_checked));

    auto const t = resolve_topology("ieee14");
    auto const c = hastings_weights(t);
    double previous = std::numeric_limits<double>::infinity();
    bool shrinking = true;
    double last = 0.0;
    for (double rho : {1e-6, 1e-10, 1e-16}) {
        EstimatorParams p;
        p.rho = rho;
        MeasurementSource src(t, Vector::Ones(14), {}, 77, 0);
        auto atc = EstimatorState::zeros(14);
        auto dsita = EstimatorState::zeros(14);
        double dev = 0.0;
        for (int i = 0; i < 100; ++i) {
            auto const samples = src.next_round();
            run_iteration(Algorithm::atc, atc, c, t, samples, p);
            run_iteration(Algorithm::dsita, dsita, c, t, samples, p);
            for (BusIndex k = 0; k < 14; ++k) dev = std::max(dev, (atc.x[k] - dsita.x[k]).cwiseAbs().maxCoeff());
        }
        o.notes.push_back("     rho=" + sci(rho) + ": max |x_dsita - x_atc| over 100 iterations = " + sci(dev));
        shrinking = shrinking && dev <= previous;
        previous = dev;
        last = dev;
    }
    o.check(shrinking && last <= kTrajectoryTol, "rho -> 0 reproduces the ATC trajectory to 1e-12");
    report("DSITA mechanics", o);
}

struct ReferenceRuns {
    std::map<Algorithm, ResultBundle> bundles;
    double seconds = 0.0;
};

ReferenceRuns run_reference() {
    ReferenceRuns out;
    auto const start = std::chrono::steady_clock::now();
    for (auto alg : kAll) out.bundles[alg] = run_experiment(reference_config(alg));
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

double steady_state_db(MetricsTrace const& tr) {
    double const tail = std::accumulate(tr.mse.end() - 100, tr.mse.end(), 0.0) / 100.0;
    return to_db(tail);
}

void convergence(ReferenceRuns const& ref) {
    Outcome o;
    std::map<Algorithm, double> ss;
    for (auto alg : kAll) {
        auto const& tr = ref.bundles.at(alg).trace;
        double const drop = to_db(tr.initial_mse) - to_db(tr.mse.at(999));
        ss[alg] = steady_state_db(tr);
        o.check(drop >= kMinDropDb, std::string(to_string(alg)) + ": MSE " + fmt(to_db(tr.initial_mse), 2) + " dB -> " +
                                        fmt(to_db(tr.mse.at(999)), 2) + " dB at iteration 1000 (drop " + fmt(drop, 2) +
                                        " dB >= 20), steady state " + fmt(ss[alg], 2) + " dB");
    }
    double const desta_vs_dsita = ss[Algorithm::dsita] - ss[Algorithm::desta];
    double const dsita_vs_atc = ss[Algorithm::atc] - ss[Algorithm::dsita];
    o.check(desta_vs_dsita >= kOrderingMarginDb,
            "steady state DESTA <= DSITA by >= 0.5 dB: margin " + fmt(desta_vs_dsita, 2) + " dB");
    o.check(dsita_vs_atc >= kOrderingMarginDb,
            "steady state DSITA <= ATC by >= 0.5 dB: margin " + fmt(dsita_vs_atc, 2) + " dB");
    o.check(ref.seconds < kMaxRuntimeSeconds, "runtime " + fmt(ref.seconds, 2) + " s < 120 s");
    report("convergence reproduction (ieee14, 100 runs, 1000 iterations)", o);
}

std::optional<std::size_t> gap_crossing(MetricsTrace const& tr) {
    double const threshold = kGapFraction * std::abs(tr.initial_gap.at(0));
    auto const& gap = tr.gap.at(0);
    for (std::size_t i = 0; i < gap.size(); ++i) {
        if (std::abs(gap[i]) < threshold) return i + 1;
    }
    return std::nullopt;
}

void fast_convergence(ReferenceRuns const& ref) {
    Outcome o;
    auto const desta = gap_crossing(ref.bundles.at(Algorithm::desta).trace);
    auto const dsita = gap_crossing(ref.bundles.at(Algorithm::dsita).trace);
    auto describe = [](std::optional<std::size_t> c) { return c ? "iteration " + std::to_string(*c) : "never"; };
    for (auto alg : kAll) {
        auto const& tr = ref.bundles.at(alg).trace;
        o.notes.push_back("     " + std::string(to_string(alg)) + ": |gap bus 5| " + fmt(std::abs(tr.initial_gap[0])) +
                          " -> " + fmt(std::abs(tr.gap[0][kGapDeadline - 1]), 4) + " at iteration 90, below 10% at " +
                          describe(gap_crossing(tr)));
    }
    o.check(desta && *desta <= kGapDeadline, "DESTA below 10% of initial gap within 90 iterations (" + describe(desta) + ")");
    o.check(dsita && *dsita <= kGapDeadline, "DSITA below 10% of initial gap within 90 iterations (" + describe(dsita) + ")");
    o.check(desta && (!dsita || *desta <= *dsita), "DESTA reaches the threshold no later than DSITA");
    report("fast-convergence reproduction (bus 5 phase-angle gap)", o);
}

void zero_noise() {
    Outcome o;
    for (auto alg : kAll) {
        auto cfg = reference_config(alg);
        cfg.noise_variance = 0.0;
        cfg.combiner = CombinationRule::metropolis;  // Hastings needs positive variances
        cfg.iterations = kNoiselessIterations;
        auto const tr = run_experiment(cfg).trace;
        std::optional<std::size_t> hit;
        for (std::size_t i = 0; i < tr.mse.size() && !hit; ++i) {
            if (tr.mse[i] < kNoiselessMse) hit = i + 1;
        }
        o.check(hit.has_value(), std::string(to_string(alg)) + ": MSE < 1e-6 " +
                                     (hit ? "at iteration " + std::to_string(*hit) : "never") + ", final " +
                                     sci(tr.mse.back()));
    }
    report("zero-noise sanity (sigma^2 = 0, 5000 iterations)", o);
}

void determinism(ReferenceRuns const& ref) {
    Outcome o;
    for (auto alg : kAll) {
        auto const again = run_experiment(reference_config(alg));
        bool const same = format_csv(again) == format_csv(ref.bundles.at(alg)) &&
                          again.config_echo == ref.bundles.at(alg).config_echo;
        o.check(same, std::string(to_string(alg)) + ": repeated execution gives byte-identical CSV");
    }
    report("determinism", o);
}

}  // namespace

int main() {
    std::cout << "gridest acceptance suite\n";
    weight_rules();
    desta_oracle();
    dsita_mechanics();
    auto const ref = run_reference();
    convergence(ref);
    fast_convergence(ref);
    zero_noise();
    determinism(ref);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed") << "\n";
    return failures == 0 ? 0 : 1;
}
