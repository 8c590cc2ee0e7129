#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridest/gridest.hpp"

namespace fs = std::filesystem;
using namespace gridest;

namespace {

std::vector<std::string> split_list(std::string const& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void summarize(ResultBundle const& b) {
    auto const& tr = b.trace;
    std::cout << std::left << std::setw(6) << b.label << " runs=" << tr.runs << " iterations=" << tr.iterations()
              << std::fixed << std::setprecision(2) << " mse0=" << to_db(tr.initial_mse) << "dB"
              << " final=" << to_db(tr.mse.back()) << "dB"
              << " (" << std::setprecision(3) << b.wall_seconds << "s)\n";
    std::cout.unsetf(std::ios::floatfield);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed state estimation on power-grid graphs"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_path;
    unsigned threads = 1;

    auto* run = app.add_subcommand("run", "run a Monte Carlo experiment and export its trace as CSV");
    run->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "override the master seed");
    run->add_option("--out", out_path, "CSV output path (default: config 'output')");
    run->add_option("--threads", threads, "worker threads for independent runs")->check(CLI::PositiveNumber);

    std::string algorithms = "atc,mcse,desta,dsita";
    std::size_t bus = 5;
    std::string plot_path;
    auto* compare = app.add_subcommand("compare", "run several algorithms on one setup and emit CSV + plot script");
    compare->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    compare->add_option("--algorithms", algorithms, "comma-separated list of atc, mcse, desta, dsita")
        ->capture_default_str();
    compare->add_option("--bus", bus, "bus whose phase-angle gap is compared")->capture_default_str();
    compare->add_option("--seed", seed, "override the master seed");
    compare->add_option("--out", out_path, "CSV output path (default: config 'output')");
    compare->add_option("--plot", plot_path, "plot script path (default: <out stem>_plot.py)");
    compare->add_option("--threads", threads, "worker threads for independent runs")->check(CLI::PositiveNumber);

    std::string preset_name;
    bool print = false;
    auto* preset = app.add_subcommand("preset", "show a built-in topology");
    preset->add_option("name", preset_name, "preset name (ieee14)")->required();
    preset->add_flag("--print", print, "print the preset document");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*preset) {
            auto const doc = preset_document(preset_name);
            if (!doc) {
                std::cerr << "error: unknown preset '" << preset_name << "'\n";
                return 2;
            }
            if (print) {
                std::cout << *doc;
            } else {
                auto const t = load_topology(*doc, preset_name);
                std::cout << preset_name << ": " << t.num_buses() << " buses, " << t.branches().size() << " branches\n";
            }
            return 0;
        }

        auto cfg = load_experiment_config(config_path);
        if (seed) cfg.seed = *seed;
        fs::path const out = out_path.empty() ? fs::path(cfg.output) : fs::path(out_path);

        if (*run) {
            auto const bundle = run_experiment(cfg, threads);
            export_csv(bundle, out);
            write_text(fs::path(out).concat(".config.toml"), bundle.config_echo);
            summarize(bundle);
            std::cout << "wrote " << out.string() << "\n";
            return 0;
        }

        std::vector<ExperimentConfig> cfgs;
        for (auto const& name : split_list(algorithms)) {
            auto c = cfg;
            c.algorithm = parse_algorithm(name);
            cfgs.push_back(std::move(c));
        }
        if (bus < 1) throw ConfigError("--bus is one-based");
        auto const cmp = compare_experiments(std::move(cfgs), bus - 1, threads);
        write_text(out, format_comparison_csv(cmp));
        fs::path const plot =
            plot_path.empty() ? out.parent_path() / (out.stem().string() + "_plot.py") : fs::path(plot_path);
        write_text(plot, plot_script(cmp, fs::relative(fs::absolute(out), fs::absolute(plot).parent_path()).string()));
        for (auto const& r : cmp.results) summarize(r);
        std::cout << "wrote " << out.string() << " and " << plot.string() << "\n";
        return 0;
    } catch (std::exception const& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
