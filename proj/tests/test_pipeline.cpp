#include "cropda/pipeline.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace cropda;

// ---------------------------------------------------------------------------
// Seed mixing

TEST_CASE("mixed seed streams are distinct per tag and reproducible") {
    CHECK(mix_seed(42, seed_tags::kTrainSeason) == mix_seed(42, seed_tags::kTrainSeason));
    CHECK(mix_seed(42, seed_tags::kTrainSeason) != mix_seed(42, seed_tags::kEvalSeason));
    CHECK(mix_seed(42, seed_tags::kTrainObs) != mix_seed(42, seed_tags::kTrainEnsemble));
    CHECK(mix_seed(42, seed_tags::kTrainSeason) != mix_seed(43, seed_tags::kTrainSeason));
    CHECK(mix_seed(42, seed_tags::kObsDay + 3) != mix_seed(42, seed_tags::kObsDay + 4));
}

// ---------------------------------------------------------------------------
// Weather generation

TEST_CASE("generated weather is valid, deterministic, and seed-sensitive") {
    const WeatherGenParams g;
    const auto a = generate_weather(g, 168, 7);
    const auto b = generate_weather(g, 168, 7);
    const auto c = generate_weather(g, 168, 8);
    REQUIRE(a.size() == 168);
    for (const WeatherDay& w : a) {
        CHECK_NOTHROW(w.validate());
        CHECK(w.tmax > w.tmin);
        CHECK(w.irrad > 0.0);
    }
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].tmax == b[i].tmax);
        CHECK(a[i].rain == b[i].rain);
    }
    bool differs = false;
    for (size_t i = 0; i < a.size(); ++i) differs = differs || a[i].tmax != c[i].tmax;
    CHECK(differs);
}

TEST_CASE("the seasonal temperature arc peaks mid-season") {
    WeatherGenParams g;
    g.t_daily_sigma = 0.0;  // strip the noise to expose the arc
    const auto w = generate_weather(g, 101, 1);
    const double start = 0.5 * (w[0].tmax + w[0].tmin);
    const double mid = 0.5 * (w[50].tmax + w[50].tmin);
    const double end = 0.5 * (w[100].tmax + w[100].tmin);
    CHECK(mid > start + 2.0);
    CHECK(mid > end + 2.0);
}

// ---------------------------------------------------------------------------
// Crop presets and season generation

TEST_CASE("the three built-in crops have distinct, valid parameter sets") {
    for (const char* name : {"rice", "maize", "soybean"}) {
        const CropPreset p = builtin_crop_preset(name);
        CHECK(p.name == name);
        CHECK(p.n_days == 168);
        CHECK_NOTHROW(p.params.validate());
        CHECK(p.start_date.to_string() == "2022-05-01");
    }
    CHECK(builtin_crop_preset("rice").params.lai_max >
          builtin_crop_preset("soybean").params.lai_max);
    CHECK_THROWS_AS(builtin_crop_preset("durian"), std::invalid_argument);
}

TEST_CASE("a 150-season batch covers 25200 day-rows") {
    const CropPreset preset = builtin_crop_preset("rice");
    const auto seasons = generate_seasons(preset, 150, 42, 4);
    REQUIRE(seasons.size() == 150);
    size_t rows = 0;
    for (const Season& s : seasons) {
        REQUIRE(s.weather.size() == 168);
        REQUIRE(s.truth.size() == 168);
        rows += s.truth.size();
    }
    CHECK(rows == 25200);
}

TEST_CASE("season generation is deterministic and thread-count independent") {
    const CropPreset preset = builtin_crop_preset("maize");
    const auto a = generate_seasons(preset, 6, 9, 1);
    const auto b = generate_seasons(preset, 6, 9, 4);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].truth == b[i].truth);
        for (size_t d = 0; d < a[i].weather.size(); ++d)
            CHECK(a[i].weather[d].tmax == b[i].weather[d].tmax);
    }
}

TEST_CASE("truth trajectories start at zero and rise to a single mid-season peak") {
    for (const char* name : {"rice", "maize", "soybean"}) {
        const CropPreset preset = builtin_crop_preset(name);
        for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
            const Season s = generate_season(preset, seed);
            CHECK(s.truth[0] == 0.0);
            double peak = 0.0;
            int peak_day = 0, peak_count = 0;
            for (int t = 0; t < int(s.truth.size()); ++t) {
                CHECK(s.truth[size_t(t)] >= 0.0);
                if (s.truth[size_t(t)] > peak) {
                    peak = s.truth[size_t(t)];
                    peak_day = t;
                }
            }
            for (double v : s.truth) peak_count += (v == peak) ? 1 : 0;
            CAPTURE(name, seed, peak, peak_day);
            CHECK(peak_count == 1);          // one global maximum
            CHECK(peak > 2.0);
            CHECK(peak < 8.0);
            CHECK(peak_day > 30);
            CHECK(s.truth.back() < peak);    // senescence has begun by harvest
        }
    }
}

// ---------------------------------------------------------------------------
// Observation synthesis

namespace {

ExperimentSpec tiny_spec() {
    ExperimentSpec spec;
    spec.crop = "rice";
    spec.seasons = 2;
    spec.eval_seeds = 2;
    spec.filter.members = 12;
    spec.methods = {"open-loop", "enkf"};
    return spec;
}

}  // namespace

TEST_CASE("noiseless dense schedules reproduce the truth at observed days") {
    ExperimentSpec spec = tiny_spec();
    spec.obs_interval_min = 1;
    spec.obs_interval_max = 1;
    spec.obs_sigma = 0.0;
    const Season s = generate_season(builtin_crop_preset("rice"), 5);
    const ObservationSeries obs = synthesize_observations(s.truth, spec, 11);
    CHECK(obs.count() == int(s.truth.size()) - 1);  // every day after the first interval
    for (int t = 1; t < obs.size(); ++t) {
        REQUIRE(obs.has(t));
        CHECK(obs.value(t) == s.truth[size_t(t)]);
    }
}

TEST_CASE("a missing window covering the season silences every reading") {
    ExperimentSpec spec = tiny_spec();
    spec.missing_windows = {{0, 167}};
    const Season s = generate_season(builtin_crop_preset("rice"), 5);
    const ObservationSeries obs = synthesize_observations(s.truth, spec, 11);
    CHECK(obs.count() == 0);
}

TEST_CASE("mid-season-only windows leave readings only inside the gap") {
    ExperimentSpec spec = tiny_spec();
    spec.missing_windows = {{0, 47}, {83, 167}};
    const Season s = generate_season(builtin_crop_preset("maize"), 6);
    const ObservationSeries obs = synthesize_observations(s.truth, spec, 12);
    CHECK(obs.count() > 0);
    for (int t = 0; t < obs.size(); ++t)
        if (obs.has(t)) {
            CHECK(t >= 48);
            CHECK(t <= 82);
        }
}

TEST_CASE("masking windows does not change the surviving readings") {
    ExperimentSpec spec = tiny_spec();
    const Season s = generate_season(builtin_crop_preset("rice"), 7);
    const ObservationSeries full = synthesize_observations(s.truth, spec, 13);
    spec.missing_windows = {{0, 60}};
    const ObservationSeries masked = synthesize_observations(s.truth, spec, 13);
    for (int t = 61; t < masked.size(); ++t) {
        CHECK(masked.has(t) == full.has(t));
        if (masked.has(t)) CHECK(masked.value(t) == full.value(t));
    }
    for (int t = 0; t <= 60; ++t) CHECK_FALSE(masked.has(t));
}

TEST_CASE("the abnormal-reading day forces an inflated observation") {
    ExperimentSpec spec = tiny_spec();
    spec.obs_sigma = 0.0;
    spec.outlier_day = 75;
    spec.outlier_factor = 2.0;
    const Season s = generate_season(builtin_crop_preset("soybean"), 8);
    const ObservationSeries obs = synthesize_observations(s.truth, spec, 14);
    REQUIRE(obs.has(75));
    CHECK(obs.value(75) == Catch::Approx(2.0 * s.truth[75]));
}

TEST_CASE("observation gaps respect the configured interval range") {
    ExperimentSpec spec = tiny_spec();
    spec.obs_interval_min = 3;
    spec.obs_interval_max = 5;
    const Season s = generate_season(builtin_crop_preset("rice"), 9);
    const ObservationSeries obs = synthesize_observations(s.truth, spec, 15);
    int prev = 0;
    for (int t = 1; t < obs.size(); ++t)
        if (obs.has(t)) {
            const int gap = t - prev;
            CHECK(gap >= 3);
            CHECK(gap <= 5);
            prev = t;
        }
}

// ---------------------------------------------------------------------------
// The three methods

TEST_CASE("an unperturbed open-loop run collapses to the single-member forecast") {
    const CropPreset preset = builtin_crop_preset("rice");
    const Season s = generate_season(preset, 3);
    const PerturbedParamSet pset = PerturbedParamSet::draw(preset.params, 8, 0.0, 1);
    const std::vector<double> open = run_open_loop(pset, s.weather);
    const std::vector<double> single =
        forecast_member(preset.params, s.weather, preset.n_days - 1);
    REQUIRE(open.size() == single.size());
    // The ensemble mean of identical members can differ from the member value
    // in the last ulp (sequential summation rounds), so compare very tightly
    // rather than bitwise.
    for (size_t t = 0; t < open.size(); ++t)
        CHECK(open[t] == Catch::Approx(single[t]).epsilon(1e-14).margin(1e-300));
}

TEST_CASE("with no observations the filter reduces exactly to the open loop") {
    const CropPreset preset = builtin_crop_preset("rice");
    const Season s = generate_season(preset, 4);
    const ExperimentSpec spec = tiny_spec();
    const PerturbedParamSet pset =
        PerturbedParamSet::draw(biased_params(preset.params, spec), 20, 0.1, 2);
    const ObservationSeries empty(preset.n_days);

    const EnkfRunOutput filtered = run_enkf(pset, s.weather, empty, spec.filter, 99);
    const std::vector<double> open = run_open_loop(pset, s.weather);
    REQUIRE(filtered.series.size() == open.size());
    for (size_t t = 0; t < open.size(); ++t) CHECK(filtered.series[t] == open[t]);
    CHECK(filtered.updates.empty());
}

TEST_CASE("a single observed day reproduces a hand-assembled smoother update") {
    const CropPreset preset = builtin_crop_preset("rice");
    const int n = 90;
    const int obs_day = 70;
    const std::uint64_t filter_seed = 21;
    const Season full = generate_season(preset, 10);
    const std::vector<WeatherDay> weather(full.weather.begin(), full.weather.begin() + n);

    FilterConfig cfg;
    cfg.members = 10;
    cfg.obs_sigma = 0.1;
    cfg.localization = LocalizationSpec::with_radius(10.0);
    cfg.inflation = true;
    const PerturbedParamSet pset = PerturbedParamSet::draw(preset.params, cfg.members, 0.1, 3);

    ObservationSeries obs(n);
    obs.set(obs_day, 3.0);
    const EnkfRunOutput run = run_enkf(pset, weather, obs, cfg, filter_seed);

    // Oracle: plain ensemble forecast to the observed day, one update of the
    // trajectory so far, then every member continues from its own analysis.
    const int M = cfg.members;
    Eigen::MatrixXd A(n, M);
    std::vector<PhenologyState> phen(static_cast<size_t>(M));
    std::vector<double> lai(static_cast<size_t>(M), 0.0);
    A.row(0).setZero();
    for (int t = 1; t <= obs_day; ++t)
        for (int m = 0; m < M; ++m) {
            const StepResult s = step_lai(lai[size_t(m)], weather[size_t(t - 1)],
                                          pset.member(m), phen[size_t(m)]);
            phen[size_t(m)] = s.phenology;
            lai[size_t(m)] = s.lai;
            A(t, m) = s.lai;
        }
    Eigen::MatrixXd V =
        Eigen::MatrixXd::Constant(obs_day + 1, M, ObservationSeries::kSentinel);
    const NoiseVector nv = draw_noise_vector(
        mix_seed(filter_seed, seed_tags::kObsDay + std::uint64_t(obs_day)), M, cfg.obs_sigma);
    V.row(obs_day) = (nv.epsilons.array() + 3.0).transpose();
    const EnkfUpdateResult upd =
        enkf_update(EnsembleMatrix(A.topRows(obs_day + 1)), V,
                    ObsNoiseModel::diagonal(cfg.obs_sigma), cfg.localization,
                    InflationState::on());
    A.topRows(obs_day + 1) = upd.analysis.matrix();
    for (int m = 0; m < M; ++m) lai[size_t(m)] = std::max(0.0, A(obs_day, m));
    for (int t = obs_day + 1; t < n; ++t)
        for (int m = 0; m < M; ++m) {
            const StepResult s = step_lai(lai[size_t(m)], weather[size_t(t - 1)],
                                          pset.member(m), phen[size_t(m)]);
            phen[size_t(m)] = s.phenology;
            lai[size_t(m)] = s.lai;
            A(t, m) = s.lai;
        }
    const Eigen::VectorXd mean = A.rowwise().mean();

    REQUIRE(run.updates.size() == 1);
    CHECK(run.updates[0].day == obs_day);
    CHECK(run.updates[0].diagnostics.n_obs == 1);
    for (int t = 0; t < n; ++t) CHECK(run.series[size_t(t)] == mean(t));
}

TEST_CASE("dense precise observations pull the filter onto the truth") {
    const CropPreset preset = builtin_crop_preset("rice");
    const Season s = generate_season(preset, 11);
    ExperimentSpec spec = tiny_spec();
    spec.obs_interval_min = 1;
    spec.obs_interval_max = 1;
    spec.obs_sigma = 0.0;

    FilterConfig cfg;
    cfg.members = 30;
    cfg.obs_sigma = 1e-6;  // near-certain readings
    cfg.localization = LocalizationSpec::off();
    cfg.inflation = false;

    const ObservationSeries obs = synthesize_observations(s.truth, spec, 16);
    const PerturbedParamSet pset =
        PerturbedParamSet::draw(biased_params(preset.params, spec), cfg.members, 0.1, 4);
    const EnkfRunOutput run = run_enkf(pset, s.weather, obs, cfg, 17);
    // Skip the first days: while every member is still pre-emergence the
    // ensemble has no spread, so even perfect readings cannot correct it.
    for (int t = 20; t < int(s.truth.size()); ++t)
        if (obs.has(t)) CHECK(std::abs(run.series[size_t(t)] - s.truth[size_t(t)]) < 0.02);
}

TEST_CASE("assimilation beats the open loop on a biased-model season") {
    const CropPreset preset = builtin_crop_preset("rice");
    const Season s = generate_season(preset, 12);
    ExperimentSpec spec = tiny_spec();
    spec.filter.members = 30;
    spec.filter.obs_sigma = 0.05;
    spec.obs_sigma = 0.05;
    spec.obs_interval_min = 2;
    spec.obs_interval_max = 4;

    const ObservationSeries obs = synthesize_observations(s.truth, spec, 18);
    const PerturbedParamSet pset =
        PerturbedParamSet::draw(biased_params(preset.params, spec), spec.filter.members, 0.1, 5);
    const std::vector<double> open = run_open_loop(pset, s.weather);
    const EnkfRunOutput filtered = run_enkf(pset, s.weather, obs, spec.filter, 19);
    CHECK(mse(s.truth, filtered.series) < mse(s.truth, open));
}

TEST_CASE("the filter ignores day-zero readings instead of dividing by zero spread") {
    const CropPreset preset = builtin_crop_preset("rice");
    const Season s = generate_season(preset, 13);
    ObservationSeries obs(preset.n_days);
    obs.set(0, 0.5);  // sowing day: the state is pinned at zero
    const ExperimentSpec spec = tiny_spec();
    const PerturbedParamSet pset =
        PerturbedParamSet::draw(biased_params(preset.params, spec), 10, 0.1, 6);
    const EnkfRunOutput run = run_enkf(pset, s.weather, obs, spec.filter, 20);
    CHECK(run.updates.empty());
    const std::vector<double> open = run_open_loop(pset, s.weather);
    for (size_t t = 0; t < open.size(); ++t) CHECK(run.series[t] == open[t]);
}

// ---------------------------------------------------------------------------
// Training-sample assembly

TEST_CASE("training samples pair per-day features with filter targets") {
    ExperimentSpec spec = tiny_spec();
    spec.seasons = 3;
    const CropPreset preset = builtin_crop_preset(spec.crop);
    const auto samples = build_training_samples(spec, preset, 2);
    REQUIRE(samples.size() == 3);
    for (const TrainingSample& s : samples) {
        CHECK_NOTHROW(s.validate());
        REQUIRE(int(s.inputs.size()) == preset.n_days);
        CHECK(s.inputs.front().size() == 3);
        for (double t : s.targets) CHECK(std::isfinite(t));
    }
    // Same spec, fresh call: byte-identical features and targets.
    const auto again = build_training_samples(spec, preset, 1);
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].targets == again[i].targets);
        for (size_t t = 0; t < samples[i].inputs.size(); ++t)
            CHECK(samples[i].inputs[t] == again[i].inputs[t]);
    }
}

// ---------------------------------------------------------------------------
// Whole experiments

TEST_CASE("a single-method experiment yields a single aggregate row") {
    ExperimentSpec spec = tiny_spec();
    spec.methods = {"open-loop"};
    spec.eval_seeds = 3;
    const ExperimentResult result = run_experiment(spec);
    REQUIRE(result.aggregate.size() == 1);
    CHECK(result.aggregate[0].method == "open-loop");
    CHECK(result.runs.size() == 3);
    CHECK_FALSE(result.trained);
    const std::string csv = metric_table_csv(result.aggregate);
    CHECK(csv.rfind("method,mse,rmse,mae\n", 0) == 0);
}

TEST_CASE("experiments are a pure function of spec and seed") {
    ExperimentSpec spec = tiny_spec();
    spec.eval_seeds = 2;
    spec.filter.members = 10;
    const ExperimentResult a = run_experiment(spec, 1);
    const ExperimentResult b = run_experiment(spec, 4);
    REQUIRE(a.runs.size() == b.runs.size());
    for (size_t i = 0; i < a.runs.size(); ++i) {
        REQUIRE(a.runs[i].estimates.size() == b.runs[i].estimates.size());
        for (size_t m = 0; m < a.runs[i].estimates.size(); ++m)
            CHECK(a.runs[i].estimates[m].series == b.runs[i].estimates[m].series);
    }
    for (size_t r = 0; r < a.aggregate.size(); ++r) {
        CHECK(a.aggregate[r].mse == b.aggregate[r].mse);
        CHECK(a.aggregate[r].mae == b.aggregate[r].mae);
    }
}

TEST_CASE("aggregate rows are the medians of the per-run metrics") {
    ExperimentSpec spec = tiny_spec();
    spec.eval_seeds = 5;
    spec.filter.members = 10;
    const ExperimentResult result = run_experiment(spec);
    for (const std::string& method : spec.methods) {
        std::vector<double> mses, maes;
        for (const auto& run : result.runs)
            for (const auto& rep : run.metrics)
                if (rep.method == method) {
                    mses.push_back(rep.mse);
                    maes.push_back(rep.mae);
                }
        REQUIRE(mses.size() == 5);
        const auto& agg = *std::find_if(result.aggregate.begin(), result.aggregate.end(),
                                        [&](const MetricReport& r) { return r.method == method; });
        CHECK(agg.mse == median_of(mses));
        CHECK(agg.mae == median_of(maes));
        CHECK(agg.rmse == Catch::Approx(std::sqrt(agg.mse)));
        CHECK(agg.n == 5);
    }
}

TEST_CASE("experiment specs validate their ranges") {
    ExperimentSpec spec = tiny_spec();
    spec.obs_interval_min = 0;
    CHECK_THROWS_AS(spec.validate(168), std::invalid_argument);
    spec = tiny_spec();
    spec.methods = {"kriging"};
    CHECK_THROWS_AS(spec.validate(168), std::invalid_argument);
    spec = tiny_spec();
    spec.missing_windows = {{100, 200}};
    CHECK_THROWS_AS(spec.validate(168), std::invalid_argument);
    spec = tiny_spec();
    spec.eval_seeds = 0;
    CHECK_THROWS_AS(spec.validate(168), std::invalid_argument);
    spec = tiny_spec();
    spec.filter.members = 1;
    CHECK_THROWS_AS(spec.validate(168), std::invalid_argument);
}

TEST_CASE("model bias multiplies the affected parameters") {
    const CropParams base = builtin_crop_preset("rice").params;
    ExperimentSpec spec = tiny_spec();
    const CropParams biased = biased_params(base, spec);
    CHECK(biased.rgrlai == Catch::Approx(base.rgrlai * spec.bias_rgrlai));
    CHECK(biased.lai_max == Catch::Approx(base.lai_max * spec.bias_lai_max));
    CHECK(biased.tsum_emergence == Catch::Approx(base.tsum_emergence * spec.bias_tsum_emergence));
    CHECK(biased.tbase == base.tbase);
    CHECK(biased.span == base.span);
}

TEST_CASE("the three experiment styles configure their signature regimes") {
    const ExperimentSpec rice = builtin_experiment_preset("rice");
    CHECK(rice.crop == "rice");
    CHECK(rice.obs_sigma == 0.05);
    CHECK(rice.missing_windows.empty());
    CHECK(rice.outlier_day == -1);

    const ExperimentSpec maize = builtin_experiment_preset("maize");
    CHECK(maize.obs_sigma == 0.15);
    REQUIRE(maize.missing_windows.size() == 2);
    CHECK(maize.missing_windows[0].first == 0);
    CHECK(maize.missing_windows[0].last == 47);
    CHECK(maize.missing_windows[1].first == 83);
    CHECK(maize.missing_windows[1].last == 167);

    const ExperimentSpec soybean = builtin_experiment_preset("soybean");
    CHECK(soybean.obs_sigma == 0.28);
    CHECK(soybean.outlier_day == 75);
    CHECK(soybean.outlier_factor == 1.5);

    CHECK_THROWS_AS(builtin_experiment_preset("teff"), std::invalid_argument);

    // Day 75 of a May 1 season is July 15; days 48 and 82 are June 18 / July 22.
    const TimeGrid grid(Date::parse("2022-05-01"), 168);
    CHECK(grid.date(75).to_string() == "2022-07-15");
    CHECK(grid.date(48).to_string() == "2022-06-18");
    CHECK(grid.date(82).to_string() == "2022-07-22");
}

TEST_CASE("median and window helpers behave on edge cases") {
    CHECK(median_of({3.0}) == 3.0);
    CHECK(median_of({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median_of({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK_THROWS_AS(median_of({}), std::invalid_argument);

    CHECK(in_missing_window({{2, 4}}, 2));
    CHECK(in_missing_window({{2, 4}}, 4));
    CHECK_FALSE(in_missing_window({{2, 4}}, 5));
    CHECK_FALSE(in_missing_window({}, 0));
}
