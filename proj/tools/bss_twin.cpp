#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "bss/experiments.hpp"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int jobs = 1;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "experiment config (TOML)")->required();
    sub->add_option("--seed", c.seed, "master seed, overrides the config");
    sub->add_option("--out", c.out, "output directory, overrides [output] dir");
    sub->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

bss::exp::ExperimentConfig resolve(const Common& c) {
    auto cfg = bss::exp::load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out.empty()) cfg.out_dir = c.out;
    cfg.jobs = c.jobs;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bike-sharing digital twin: forecasting and relocation experiments"};
    app.footer(std::string(bss::exp::kConfigReference));
    app.require_subcommand(1);
    Common common;
    auto* build = app.add_subcommand("build-dataset", "aggregate trips into the half-hourly dataset");
    auto* eval = app.add_subcommand("eval-forecast", "fit and score the forecasting models");
    auto* sim = app.add_subcommand("simulate", "run the relocation campaign per forecaster");
    auto* sweep = app.add_subcommand("fleet-sweep", "missed requests for every morning/afternoon fleet split");
    for (auto* s : {build, eval, sim, sweep}) add_common(s, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        auto cfg = resolve(common);
        if (build->parsed()) {
            auto s = bss::exp::cmd_build_dataset(cfg);
            std::cout << "dataset: " << s.rows << " rows, " << s.n_days << " days, " << s.n_stations << " stations -> "
                      << cfg.out_dir << "/dataset.csv\n";
        } else if (eval->parsed()) {
            auto r = bss::exp::cmd_eval_forecast(cfg);
            std::cout << "evaluated " << cfg.models.size() << " models; best: "
                      << (r.best_model.empty() ? "none" : r.best_model) << " -> " << cfg.out_dir << "/eval\n";
        } else if (sim->parsed()) {
            auto r = bss::exp::cmd_simulate(cfg);
            for (std::size_t i = 0; i < r.names.size(); ++i)
                std::cout << r.names[i] << ": mean daily missed " << bss::csv::fixed(bss::exp::mean_total_missed(r.days[i]), 3)
                          << '\n';
        } else if (sweep->parsed()) {
            for (const auto& m : bss::exp::cmd_fleet_sweep(cfg)) std::cout << bss::exp::sweep_table(m);
        }
    } catch (const bss::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
