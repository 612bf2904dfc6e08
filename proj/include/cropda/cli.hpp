#pragma once

// Command-line surface: simulate / train / assimilate / evaluate / report.
// run_cli is callable in-process so the test suite can drive the full binary
// behavior without spawning.

#include "cropda/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>
#include <string>
#include <vector>

namespace cropda {

namespace detail {

struct CliState {
    ExperimentSpec spec;
    RuntimeOptions rt;

    std::string config_path;
    std::string experiment_path;
    std::string preset_name;
    std::string crop_file;

    bool seed_set = false;
    std::uint64_t seed_flag = 0;
    std::string method_flag;

    // Resolution order: builtin preset -> experiment file -> config file ->
    // individual flags.
    void resolve() {
        if (!preset_name.empty()) {
            const ExperimentSpec base = builtin_experiment_preset(preset_name);
            spec = base;
        }
        if (!experiment_path.empty()) apply_config_file(spec, rt, experiment_path);
        if (!config_path.empty()) apply_config_file(spec, rt, config_path);
        if (seed_set) spec.seed = seed_flag;
        if (!method_flag.empty()) {
            if (method_flag == "all")
                spec.methods = {"open-loop", "enkf", "enkf-lstm"};
            else
                spec.methods = {method_flag};
        }
    }

    CropPreset crop_preset() const {
        if (!crop_file.empty()) return read_crop_preset_file(crop_file);
        return builtin_crop_preset(spec.crop);
    }
};

inline void add_common_flags(CLI::App* cmd, CliState& st) {
    cmd->add_option("--config", st.config_path, "flat key=value configuration file");
    cmd->add_option("--preset", st.preset_name,
                    "builtin experiment preset (rice, maize, soybean)");
    cmd->add_option("--experiment", st.experiment_path, "experiment preset file (.exp)");
    cmd->add_option("--crop-file", st.crop_file, "crop preset file (.crop)");
    cmd->add_option("--seed", st.seed_flag, "master seed")->each([&st](const std::string&) {
        st.seed_set = true;
    });
    cmd->add_option("--out-dir", st.rt.out_dir, "output directory");
    cmd->add_option("--method", st.method_flag,
                    "method to run: open-loop, enkf, enkf-lstm, or all");
    cmd->add_option("--threads", st.rt.threads, "worker threads");
    cmd->add_flag("--deterministic", st.rt.deterministic,
                  "zero timing fields so identical runs are byte-identical");
}

inline std::string out_path(const RuntimeOptions& rt, const std::string& name) {
    if (rt.out_dir.empty() || rt.out_dir == ".") return name;
    return rt.out_dir + "/" + name;
}

inline int cmd_simulate(CliState& st, int count, std::ostream& out) {
    const CropPreset preset = st.crop_preset();
    const int n = (count > 0) ? count : st.spec.seasons;
    ExperimentSpec spec = st.spec;
    spec.seasons = n;
    spec.validate(preset.n_days);
    ensure_directory(st.rt.out_dir);
    const std::vector<Season> seasons = generate_seasons(preset, n, spec.seed, st.rt.threads);
    const TimeGrid grid(preset.start_date, preset.n_days);
    for (int i = 0; i < n; ++i) {
        char tag[24];
        std::snprintf(tag, sizeof(tag), "season_%03d", i);
        const std::string dir = out_path(st.rt, tag);
        ensure_directory(dir);
        {
            std::ofstream os(dir + "/weather.csv");
            require(bool(os), "cannot write " + dir + "/weather.csv");
            write_weather_csv(os, grid, seasons[size_t(i)].weather);
        }
        {
            std::ofstream os(dir + "/truth.csv");
            require(bool(os), "cannot write " + dir + "/truth.csv");
            write_truth_csv(os, grid, seasons[size_t(i)].truth);
        }
        {
            const ObservationSeries obs = synthesize_observations(
                seasons[size_t(i)].truth, spec,
                mix_seed(spec.seed, seed_tags::kTrainObs + std::uint64_t(i)));
            std::ofstream os(dir + "/observations.csv");
            require(bool(os), "cannot write " + dir + "/observations.csv");
            write_observations_csv(os, grid, obs);
        }
    }
    out << "wrote " << n << " season(s) under " << st.rt.out_dir << "\n";
    return 0;
}

inline int cmd_train(CliState& st, const std::string& weights_out, const std::string& loss_out,
                     std::ostream& out) {
    const CropPreset preset = st.crop_preset();
    st.spec.validate(preset.n_days);
    ensure_directory(st.rt.out_dir);

    const std::vector<TrainingSample> samples =
        build_training_samples(st.spec, preset, st.rt.threads);
    TrainConfig cfg = st.spec.train;
    cfg.seed = mix_seed(st.spec.seed, seed_tags::kTrainLoop);
    const TrainResult tr = train_emulator(samples, cfg);

    const std::string wpath =
        weights_out.empty() ? out_path(st.rt, "emulator.lstm") : weights_out;
    save_lstm_file(tr.net, wpath);

    const std::string lpath = loss_out.empty() ? out_path(st.rt, "loss_curve.csv") : loss_out;
    {
        std::ofstream os(lpath);
        require(bool(os), "cannot write " + lpath);
        os << "# cropda-loss v1\n";
        os << "epoch,train_mse,val_mse\n";
        for (size_t i = 0; i < tr.loss_curve.size(); ++i) {
            os << i << "," << format_double(tr.loss_curve[i].train_mse) << ",";
            if (std::isfinite(tr.loss_curve[i].val_mse))
                os << format_double(tr.loss_curve[i].val_mse);
            os << "\n";
        }
    }
    out << "trained on " << samples.size() << " season(s); final training MSE "
        << format_metric_value(tr.final_train_mse) << "; weights: " << wpath << "\n";
    return 0;
}

inline int cmd_assimilate(CliState& st, const std::string& weather_path,
                          const std::string& obs_path, const std::string& truth_path,
                          const std::string& weights_path, const std::string& report_out,
                          std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const CropPreset preset = st.crop_preset();
    const WeatherTable weather = read_weather_csv_file(weather_path);
    st.spec.validate(weather.grid.n_days());
    const ObservationSeries obs = read_observations_csv_file(obs_path, weather.grid);
    std::vector<double> truth;
    if (!truth_path.empty()) truth = read_truth_csv_file(truth_path, weather.grid);

    LstmNetwork net;
    const bool wants_lstm = wants_method(st.spec, "enkf-lstm");
    if (wants_lstm) {
        require(!weights_path.empty(), "enkf-lstm needs --weights <file>");
        net = load_lstm_file(weights_path);
    }

    const CropParams model_params = biased_params(preset.params, st.spec);
    const PerturbedParamSet pset =
        PerturbedParamSet::draw(model_params, st.spec.filter.members, st.spec.filter.param_sigma,
                                mix_seed(st.spec.seed, seed_tags::kEvalEnsemble));

    RunReport report;
    report.crop = preset.name;
    report.seed = st.spec.seed;
    report.deterministic = st.rt.deterministic;
    report.start_date = weather.grid.start_date().to_string();
    report.n_days = weather.grid.n_days();
    report.config = config_echo(st.spec);
    report.truth = truth;
    report.observations = obs;

    std::vector<double> open;
    if (wants_method(st.spec, "open-loop") || wants_lstm)
        open = run_open_loop(pset, weather.days, st.rt.threads);
    for (const std::string& method : st.spec.methods) {
        std::vector<double> series;
        if (method == "open-loop") {
            series = open;
        } else if (method == "enkf") {
            EnkfRunOutput er = run_enkf(pset, weather.days, obs, st.spec.filter,
                                        mix_seed(st.spec.seed, seed_tags::kEvalFilter));
            series = std::move(er.series);
            report.enkf_updates = std::move(er.updates);
        } else {
            series = emulate_assimilation(net, open, obs);
        }
        if (!truth.empty())
            report.metrics.push_back(compute_metrics(method, truth, series));
        report.estimates.push_back({method, std::move(series)});
    }

    report.wall_seconds =
        st.rt.deterministic
            ? 0.0
            : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    ensure_directory(st.rt.out_dir);
    const std::string rpath = report_out.empty() ? out_path(st.rt, "report.json") : report_out;
    write_run_report_file(rpath, report);
    out << "wrote " << rpath << "\n";
    return 0;
}

inline int cmd_evaluate(const std::vector<std::string>& report_paths,
                        const std::string& output, std::ostream& out) {
    require(!report_paths.empty(), "evaluate needs at least one run report");
    std::vector<std::string> order;
    std::vector<std::vector<double>> mses, maes;
    for (const std::string& path : report_paths) {
        const RunReport r = read_run_report_file(path);
        require(!r.metrics.empty(),
                path + ": report carries no metrics (assimilate was run without --truth)");
        for (const auto& m : r.metrics) {
            auto it = std::find(order.begin(), order.end(), m.method);
            size_t idx;
            if (it == order.end()) {
                idx = order.size();
                order.push_back(m.method);
                mses.emplace_back();
                maes.emplace_back();
            } else {
                idx = size_t(it - order.begin());
            }
            mses[idx].push_back(m.mse);
            maes[idx].push_back(m.mae);
        }
    }
    std::vector<MetricReport> rows;
    for (size_t i = 0; i < order.size(); ++i) {
        MetricReport rep;
        rep.method = order[i];
        rep.mse = median_of(mses[i]);
        rep.rmse = std::sqrt(rep.mse);
        rep.mae = median_of(maes[i]);
        rep.n = int(mses[i].size());
        rows.push_back(rep);
    }
    const std::string csv = metric_table_csv(rows);
    if (output.empty() || output == "-") {
        out << csv;
    } else {
        std::ofstream os(output);
        require(bool(os), "cannot write " + output);
        os << csv;
        out << "wrote " << output << "\n";
    }
    return 0;
}

inline int cmd_report(const std::string& report_path, const std::string& output,
                      std::ostream& out) {
    const RunReport r = read_run_report_file(report_path);
    if (output.empty() || output == "-") {
        write_plot_csv(out, r);
    } else {
        std::ofstream os(output);
        require(bool(os), "cannot write " + output);
        write_plot_csv(os, r);
        out << "wrote " << output << "\n";
    }
    return 0;
}

}  // namespace detail

// Full CLI entry point; argv-style arguments without the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Crop LAI data assimilation toolkit"};
    app.require_subcommand(1);

    detail::CliState st;

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate synthetic seasons to CSV files");
    int sim_count = 0;
    detail::add_common_flags(sim, st);
    sim->add_option("--count", sim_count, "number of seasons (default: config 'seasons')");

    // train
    auto* train = app.add_subcommand("train", "generate filter targets and train the emulator");
    std::string weights_out, loss_out;
    detail::add_common_flags(train, st);
    train->add_option("--weights-out", weights_out, "weight file path (default out-dir/emulator.lstm)");
    train->add_option("--loss-out", loss_out, "loss curve CSV path (default out-dir/loss_curve.csv)");

    // assimilate
    auto* assim = app.add_subcommand("assimilate", "run estimation methods on one season");
    std::string weather_path, obs_path, truth_path, weights_path, report_out;
    detail::add_common_flags(assim, st);
    assim->add_option("--weather", weather_path, "weather CSV")->required();
    assim->add_option("--observations", obs_path, "observations CSV")->required();
    assim->add_option("--truth", truth_path, "truth CSV (enables metrics)");
    assim->add_option("--weights", weights_path, "trained weight file (for enkf-lstm)");
    assim->add_option("--report-out", report_out, "report path (default out-dir/report.json)");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "aggregate metric table from run reports");
    std::vector<std::string> eval_reports;
    std::string eval_output;
    eval->add_option("reports", eval_reports, "run report JSON files")->required();
    eval->add_option("--output", eval_output, "output CSV path (default stdout)");

    // report
    auto* plot = app.add_subcommand("report", "emit tidy plot-data CSV from a run report");
    std::string plot_report, plot_output;
    plot->add_option("report", plot_report, "run report JSON file")->required();
    plot->add_option("--output", plot_output, "output CSV path (default stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        st.resolve();
        if (sim->parsed()) return detail::cmd_simulate(st, sim_count, out);
        if (train->parsed()) return detail::cmd_train(st, weights_out, loss_out, out);
        if (assim->parsed())
            return detail::cmd_assimilate(st, weather_path, obs_path, truth_path, weights_path,
                                          report_out, out);
        if (eval->parsed()) return detail::cmd_evaluate(eval_reports, eval_output, out);
        if (plot->parsed()) return detail::cmd_report(plot_report, plot_output, out);
        err << "error: no subcommand given\n" << app.help();
        return 2;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return 1;
    }
}

inline int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace cropda
