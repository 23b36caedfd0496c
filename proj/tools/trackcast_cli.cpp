#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "trackcast/errors.hpp"
#include "trackcast/pipeline.hpp"

namespace {

// exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure
constexpr int kUsageError = 1;
constexpr int kDataError = 2;
constexpr int kNumericalError = 3;

struct CommonArgs {
    std::string config;
    std::string out;
    std::string checkpoint;
    long seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* opt = cmd->add_option("--config", args.config, "run configuration file");
    if (config_required) opt->required();
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--checkpoint", args.checkpoint, "parameter checkpoint file");
    cmd->add_option("--seed", args.seed, "override the run seed");
}

trackcast::RunConfig load_config(const CommonArgs& args) {
    trackcast::RunConfig cfg =
        args.config.empty() ? trackcast::RunConfig{} : trackcast::parse_config_file(args.config);
    if (!args.out.empty()) cfg.out_dir = args.out;
    if (!args.checkpoint.empty()) cfg.checkpoint_path = args.checkpoint;
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint 3D multi-object tracking and trajectory forecasting"};
    app.require_subcommand(1);

    CommonArgs synth_args, train_args, track_args, forecast_args, eval_args;
    std::string report_path;

    add_common(app.add_subcommand("synth", "generate a synthetic dataset"), synth_args);
    add_common(app.add_subcommand("train", "train the model (both stages)"), train_args);
    add_common(app.add_subcommand("track", "run tracking and per-track forecasting"), track_args);
    add_common(app.add_subcommand("forecast", "forecast from ground-truth histories"),
               forecast_args);
    add_common(app.add_subcommand("evaluate", "compute MOT and forecasting metrics"), eval_args);
    auto* report_cmd = app.add_subcommand("report", "render tables from a report.json");
    report_cmd->add_option("--report", report_path, "path to report.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kUsageError;
    }

    try {
        if (app.got_subcommand("synth")) {
            trackcast::cmd_synth(load_config(synth_args));
        } else if (app.got_subcommand("train")) {
            trackcast::cmd_train(load_config(train_args));
        } else if (app.got_subcommand("track")) {
            trackcast::cmd_track(load_config(track_args));
        } else if (app.got_subcommand("forecast")) {
            trackcast::cmd_forecast(load_config(forecast_args));
        } else if (app.got_subcommand("evaluate")) {
            const auto report = trackcast::cmd_evaluate(load_config(eval_args));
            std::fputs(trackcast::render_report(report).c_str(), stdout);
        } else if (app.got_subcommand("report")) {
            const auto report = trackcast::metrics::MetricReport::from_json_file(report_path);
            std::fputs(trackcast::render_report(report).c_str(), stdout);
        }
    } catch (const trackcast::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kNumericalError;
    } catch (const trackcast::DomainError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kNumericalError;
    } catch (const trackcast::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kDataError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kDataError;
    }
    return 0;
}
