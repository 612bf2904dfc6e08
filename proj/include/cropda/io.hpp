#pragma once

// File formats: flat key=value config, weather / observation / truth CSVs,
// the JSON run report, and the tidy plot-data CSV. Every format carries a
// version marker; all parse errors name the file and line.

#include "cropda/pipeline.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cropda {

using ordered_json = nlohmann::ordered_json;

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] inline void fail_at(const std::string& path, int line, const std::string& msg) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

inline double parse_double_at(const std::string& text, const std::string& path, int line,
                              const std::string& what) {
    try {
        size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        fail_at(path, line, "cannot parse " + what + " value '" + text + "'");
    }
}

inline long long parse_int_at(const std::string& text, const std::string& path, int line,
                              const std::string& what) {
    try {
        size_t used = 0;
        const long long v = std::stoll(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        fail_at(path, line, "cannot parse " + what + " value '" + text + "'");
    }
}

inline bool parse_bool_at(const std::string& text, const std::string& path, int line,
                          const std::string& what) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    fail_at(path, line, what + " must be true/false, got '" + text + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Flat key=value files ('#' comments), preserving order and line numbers.

struct KeyValueFile {
    struct Entry {
        std::string key;
        std::string value;
        int line = 0;
    };
    std::string path;
    std::vector<Entry> entries;

    static KeyValueFile parse(std::istream& is, const std::string& path) {
        KeyValueFile kv;
        kv.path = path;
        std::string raw;
        int line = 0;
        while (std::getline(is, raw)) {
            ++line;
            const auto hash = raw.find('#');
            if (hash != std::string::npos) raw.erase(hash);
            const std::string text = detail::trim(raw);
            if (text.empty()) continue;
            const auto eq = text.find('=');
            if (eq == std::string::npos)
                detail::fail_at(path, line, "expected 'key = value', got '" + text + "'");
            Entry e;
            e.key = detail::trim(text.substr(0, eq));
            e.value = detail::trim(text.substr(eq + 1));
            e.line = line;
            if (e.key.empty()) detail::fail_at(path, line, "empty key");
            kv.entries.push_back(std::move(e));
        }
        return kv;
    }

    static KeyValueFile parse_file(const std::string& path) {
        std::ifstream is(path);
        require(bool(is), "cannot open config file: " + path);
        return parse(is, path);
    }
};

// ---------------------------------------------------------------------------
// Experiment configuration schema (shared by --config files and .exp presets)

struct RuntimeOptions {
    int threads = 1;
    std::string out_dir = ".";
    bool deterministic = false;
};

// Applies one key to the spec/runtime pair; returns false for unknown keys so
// the caller can report the offending name.
inline bool apply_experiment_key(ExperimentSpec& spec, RuntimeOptions& rt,
                                 const KeyValueFile::Entry& e, const std::string& path) {
    const std::string& k = e.key;
    const std::string& v = e.value;
    const int ln = e.line;
    auto as_double = [&] { return detail::parse_double_at(v, path, ln, k); };
    auto as_int = [&] { return int(detail::parse_int_at(v, path, ln, k)); };
    auto as_bool = [&] { return detail::parse_bool_at(v, path, ln, k); };

    if (k == "crop") spec.crop = v;
    else if (k == "seasons") spec.seasons = as_int();
    else if (k == "eval_seeds") spec.eval_seeds = as_int();
    else if (k == "seed") spec.seed = std::uint64_t(detail::parse_int_at(v, path, ln, k));
    else if (k == "obs_interval_min") spec.obs_interval_min = as_int();
    else if (k == "obs_interval_max") spec.obs_interval_max = as_int();
    else if (k == "obs_sigma") spec.obs_sigma = as_double();
    else if (k == "missing_windows") {
        spec.missing_windows.clear();
        if (!v.empty()) {
            for (const std::string& part : detail::split(v, ',')) {
                const auto dash = part.find('-');
                if (dash == std::string::npos)
                    detail::fail_at(path, ln, "missing_windows wants 'first-last' ranges");
                DayRange r;
                r.first = int(detail::parse_int_at(detail::trim(part.substr(0, dash)), path, ln, k));
                r.last = int(detail::parse_int_at(detail::trim(part.substr(dash + 1)), path, ln, k));
                spec.missing_windows.push_back(r);
            }
        }
    } else if (k == "outlier_day") spec.outlier_day = as_int();
    else if (k == "outlier_factor") spec.outlier_factor = as_double();
    else if (k == "methods") {
        spec.methods.clear();
        for (const std::string& part : detail::split(v, ','))
            if (!detail::trim(part).empty()) spec.methods.push_back(detail::trim(part));
    } else if (k == "bias_rgrlai") spec.bias_rgrlai = as_double();
    else if (k == "bias_lai_max") spec.bias_lai_max = as_double();
    else if (k == "bias_tsum_emergence") spec.bias_tsum_emergence = as_double();
    else if (k == "members") spec.filter.members = as_int();
    else if (k == "param_sigma") spec.filter.param_sigma = as_double();
    else if (k == "filter_obs_sigma") spec.filter.obs_sigma = as_double();
    else if (k == "localization_enabled") spec.filter.localization.enabled = as_bool();
    else if (k == "localization_radius_days") spec.filter.localization.radius_days = as_double();
    else if (k == "inflation_enabled") spec.filter.inflation = as_bool();
    else if (k == "lstm_hidden") {
        spec.train.hidden.clear();
        for (const std::string& part : detail::split(v, ','))
            spec.train.hidden.push_back(
                int(detail::parse_int_at(detail::trim(part), path, ln, k)));
    } else if (k == "lstm_epochs") spec.train.epochs = as_int();
    else if (k == "lstm_learning_rate") spec.train.learning_rate = as_double();
    else if (k == "lstm_batch_size") spec.train.batch_size = as_int();
    else if (k == "lstm_grad_clip") spec.train.grad_clip = as_double();
    else if (k == "lstm_validation_fraction") spec.train.validation_fraction = as_double();
    else if (k == "lstm_standardize_inputs") spec.train.standardize_inputs = as_bool();
    else if (k == "threads") rt.threads = as_int();
    else if (k == "out_dir") rt.out_dir = v;
    else return false;
    return true;
}

inline void apply_config_file(ExperimentSpec& spec, RuntimeOptions& rt,
                              const std::string& path) {
    const KeyValueFile kv = KeyValueFile::parse_file(path);
    for (const auto& e : kv.entries)
        if (!apply_experiment_key(spec, rt, e, path))
            detail::fail_at(path, e.line, "unknown config key '" + e.key + "'");
}

// The effective configuration echoed into reports, schema order. Runtime
// plumbing (threads, out_dir) is deliberately excluded: it must not change
// result bytes.
inline std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentSpec& spec) {
    std::vector<std::pair<std::string, std::string>> kv;
    auto add = [&](const std::string& k, const std::string& v) { kv.emplace_back(k, v); };
    add("crop", spec.crop);
    add("seasons", std::to_string(spec.seasons));
    add("eval_seeds", std::to_string(spec.eval_seeds));
    add("seed", std::to_string(spec.seed));
    add("obs_interval_min", std::to_string(spec.obs_interval_min));
    add("obs_interval_max", std::to_string(spec.obs_interval_max));
    add("obs_sigma", format_double(spec.obs_sigma));
    {
        std::string w;
        for (const auto& r : spec.missing_windows) {
            if (!w.empty()) w += ",";
            w += std::to_string(r.first) + "-" + std::to_string(r.last);
        }
        add("missing_windows", w);
    }
    add("outlier_day", std::to_string(spec.outlier_day));
    add("outlier_factor", format_double(spec.outlier_factor));
    {
        std::string m;
        for (const auto& name : spec.methods) {
            if (!m.empty()) m += ",";
            m += name;
        }
        add("methods", m);
    }
    add("bias_rgrlai", format_double(spec.bias_rgrlai));
    add("bias_lai_max", format_double(spec.bias_lai_max));
    add("bias_tsum_emergence", format_double(spec.bias_tsum_emergence));
    add("members", std::to_string(spec.filter.members));
    add("param_sigma", format_double(spec.filter.param_sigma));
    add("filter_obs_sigma", format_double(spec.filter.obs_sigma));
    add("localization_enabled", spec.filter.localization.enabled ? "true" : "false");
    add("localization_radius_days", format_double(spec.filter.localization.radius_days));
    add("inflation_enabled", spec.filter.inflation ? "true" : "false");
    {
        std::string h;
        for (int d : spec.train.hidden) {
            if (!h.empty()) h += ",";
            h += std::to_string(d);
        }
        add("lstm_hidden", h);
    }
    add("lstm_epochs", std::to_string(spec.train.epochs));
    add("lstm_learning_rate", format_double(spec.train.learning_rate));
    add("lstm_batch_size", std::to_string(spec.train.batch_size));
    add("lstm_grad_clip", format_double(spec.train.grad_clip));
    add("lstm_validation_fraction", format_double(spec.train.validation_fraction));
    add("lstm_standardize_inputs", spec.train.standardize_inputs ? "true" : "false");
    return kv;
}

// ---------------------------------------------------------------------------
// Crop preset files

inline CropPreset read_crop_preset(std::istream& is, const std::string& path) {
    const KeyValueFile kv = KeyValueFile::parse(is, path);
    CropPreset p;
    bool have[6] = {false, false, false, false, false, false};
    for (const auto& e : kv.entries) {
        const std::string& k = e.key;
        const std::string& v = e.value;
        auto as_double = [&] { return detail::parse_double_at(v, path, e.line, k); };
        if (k == "name") p.name = v;
        else if (k == "start_date") {
            try {
                p.start_date = Date::parse(v);
            } catch (const std::exception& ex) {
                detail::fail_at(path, e.line, ex.what());
            }
        } else if (k == "n_days") p.n_days = int(detail::parse_int_at(v, path, e.line, k));
        else if (k == "tbase") { p.params.tbase = as_double(); have[0] = true; }
        else if (k == "tsum_emergence") { p.params.tsum_emergence = as_double(); have[1] = true; }
        else if (k == "rgrlai") { p.params.rgrlai = as_double(); have[2] = true; }
        else if (k == "span") { p.params.span = as_double(); have[3] = true; }
        else if (k == "lai_max") { p.params.lai_max = as_double(); have[4] = true; }
        else if (k == "lai_init") { p.params.lai_init = as_double(); have[5] = true; }
        else if (k == "weather_t_level") p.weather.t_level = as_double();
        else if (k == "weather_t_amplitude") p.weather.t_amplitude = as_double();
        else if (k == "weather_t_daily_sigma") p.weather.t_daily_sigma = as_double();
        else if (k == "weather_diurnal_range") p.weather.diurnal_range = as_double();
        else if (k == "weather_diurnal_sigma") p.weather.diurnal_sigma = as_double();
        else if (k == "weather_irrad_base") p.weather.irrad_base = as_double();
        else if (k == "weather_irrad_per_degc") p.weather.irrad_per_degc = as_double();
        else if (k == "weather_irrad_sigma") p.weather.irrad_sigma = as_double();
        else if (k == "weather_vap_base") p.weather.vap_base = as_double();
        else if (k == "weather_vap_sigma") p.weather.vap_sigma = as_double();
        else if (k == "weather_wind_mean") p.weather.wind_mean = as_double();
        else if (k == "weather_wind_sigma") p.weather.wind_sigma = as_double();
        else if (k == "weather_rain_probability") p.weather.rain_probability = as_double();
        else if (k == "weather_rain_scale") p.weather.rain_scale = as_double();
        else detail::fail_at(path, e.line, "unknown crop preset key '" + k + "'");
    }
    require(!p.name.empty(), path + ": crop preset needs a name");
    const char* names[6] = {"tbase", "tsum_emergence", "rgrlai", "span", "lai_max", "lai_init"};
    for (int i = 0; i < 6; ++i)
        require(have[i], path + ": crop preset missing key '" + std::string(names[i]) + "'");
    require(p.n_days >= 2, path + ": n_days must be >= 2");
    p.params.validate();
    return p;
}

inline CropPreset read_crop_preset_file(const std::string& path) {
    std::ifstream is(path);
    require(bool(is), "cannot open crop preset: " + path);
    return read_crop_preset(is, path);
}

// ---------------------------------------------------------------------------
// Weather CSV: version comment, header date,tmax,tmin,irrad,vap,wind,rain;
// rows must be consecutive days.

struct WeatherTable {
    TimeGrid grid = TimeGrid(Date::parse("2022-05-01"), 1);
    std::vector<WeatherDay> days;
};

inline WeatherTable read_weather_csv(std::istream& is, const std::string& path) {
    static const std::vector<std::string> kCols = {"date", "tmax", "tmin", "irrad",
                                                   "vap",  "wind", "rain"};
    std::string raw;
    int line = 0;
    // Skip leading comment lines, then demand the exact header.
    std::vector<std::string> header;
    while (std::getline(is, raw)) {
        ++line;
        const std::string text = detail::trim(raw);
        if (text.empty() || text[0] == '#') continue;
        header = detail::split(text, ',');
        break;
    }
    require(!header.empty(), path + ": missing header row");
    for (auto& h : header) h = detail::trim(h);
    for (const auto& want : kCols)
        if (std::find(header.begin(), header.end(), want) == header.end())
            detail::fail_at(path, line, "missing column '" + want + "'");
    if (header != kCols)
        detail::fail_at(path, line, "header must be exactly 'date,tmax,tmin,irrad,vap,wind,rain'");

    std::vector<Date> dates;
    std::vector<WeatherDay> days;
    while (std::getline(is, raw)) {
        ++line;
        const std::string text = detail::trim(raw);
        if (text.empty() || text[0] == '#') continue;
        const auto cells = detail::split(text, ',');
        if (cells.size() != kCols.size())
            detail::fail_at(path, line, "expected 7 columns, got " + std::to_string(cells.size()));
        Date d = Date::parse("2000-01-01");
        try {
            d = Date::parse(detail::trim(cells[0]));
        } catch (const std::exception& ex) {
            detail::fail_at(path, line, ex.what());
        }
        WeatherDay w;
        w.tmax = detail::parse_double_at(detail::trim(cells[1]), path, line, "tmax");
        w.tmin = detail::parse_double_at(detail::trim(cells[2]), path, line, "tmin");
        w.irrad = detail::parse_double_at(detail::trim(cells[3]), path, line, "irrad");
        w.vap = detail::parse_double_at(detail::trim(cells[4]), path, line, "vap");
        w.wind = detail::parse_double_at(detail::trim(cells[5]), path, line, "wind");
        w.rain = detail::parse_double_at(detail::trim(cells[6]), path, line, "rain");
        if (w.tmax < w.tmin) detail::fail_at(path, line, "tmax < tmin");
        try {
            w.validate();
        } catch (const std::exception& ex) {
            detail::fail_at(path, line, ex.what());
        }
        if (!dates.empty() && d - dates.back() != 1)
            detail::fail_at(path, line, "date gap or disorder: " + dates.back().to_string() +
                                            " followed by " + d.to_string());
        dates.push_back(d);
        days.push_back(w);
    }
    require(!days.empty(), path + ": no data rows");
    WeatherTable table;
    table.grid = TimeGrid(dates.front(), int(days.size()));
    table.days = std::move(days);
    return table;
}

inline WeatherTable read_weather_csv_file(const std::string& path) {
    std::ifstream is(path);
    require(bool(is), "cannot open weather file: " + path);
    return read_weather_csv(is, path);
}

inline void write_weather_csv(std::ostream& os, const TimeGrid& grid,
                              const std::vector<WeatherDay>& days) {
    require(int(days.size()) == grid.n_days(), "weather length must match the grid");
    os << "# cropda-weather v1\n";
    os << "date,tmax,tmin,irrad,vap,wind,rain\n";
    for (int t = 0; t < grid.n_days(); ++t) {
        const WeatherDay& w = days[size_t(t)];
        os << grid.date(t).to_string() << "," << format_double(w.tmax) << ","
           << format_double(w.tmin) << "," << format_double(w.irrad) << ","
           << format_double(w.vap) << "," << format_double(w.wind) << ","
           << format_double(w.rain) << "\n";
    }
}

// ---------------------------------------------------------------------------
// Observation / truth CSVs: header date,lai. A day with no row is missing.

inline ObservationSeries read_observations_csv(std::istream& is, const std::string& path,
                                               const TimeGrid& grid) {
    std::string raw;
    int line = 0;
    std::vector<std::string> header;
    while (std::getline(is, raw)) {
        ++line;
        const std::string text = detail::trim(raw);
        if (text.empty() || text[0] == '#') continue;
        header = detail::split(text, ',');
        break;
    }
    require(!header.empty(), path + ": missing header row");
    for (auto& h : header) h = detail::trim(h);
    if (header != std::vector<std::string>{"date", "lai"})
        detail::fail_at(path, line, "header must be exactly 'date,lai'");

    ObservationSeries obs(grid.n_days());
    while (std::getline(is, raw)) {
        ++line;
        const std::string text = detail::trim(raw);
        if (text.empty() || text[0] == '#') continue;
        const auto cells = detail::split(text, ',');
        if (cells.size() != 2)
            detail::fail_at(path, line, "expected 2 columns, got " + std::to_string(cells.size()));
        Date d = Date::parse("2000-01-01");
        try {
            d = Date::parse(detail::trim(cells[0]));
        } catch (const std::exception& ex) {
            detail::fail_at(path, line, ex.what());
        }
        if (!grid.contains(d))
            detail::fail_at(path, line, "date " + d.to_string() + " outside the season grid");
        const int day = grid.day_of(d);
        if (obs.has(day))
            detail::fail_at(path, line, "duplicate date " + d.to_string());
        const double lai = detail::parse_double_at(detail::trim(cells[1]), path, line, "lai");
        if (!(std::isfinite(lai) && lai >= 0.0))
            detail::fail_at(path, line, "lai must be finite and >= 0, got " + detail::trim(cells[1]));
        obs.set(day, lai);
    }
    return obs;
}

inline ObservationSeries read_observations_csv_file(const std::string& path,
                                                    const TimeGrid& grid) {
    std::ifstream is(path);
    require(bool(is), "cannot open observations file: " + path);
    return read_observations_csv(is, path, grid);
}

inline void write_observations_csv(std::ostream& os, const TimeGrid& grid,
                                   const ObservationSeries& obs) {
    require(obs.size() == grid.n_days(), "observations must match the grid");
    os << "# cropda-observations v1\n";
    os << "date,lai\n";
    for (int t = 0; t < grid.n_days(); ++t)
        if (obs.has(t))
            os << grid.date(t).to_string() << "," << format_double(obs.value(t)) << "\n";
}

// Truth files share the observation format but must cover every day.
inline std::vector<double> read_truth_csv_file(const std::string& path, const TimeGrid& grid) {
    std::ifstream is(path);
    require(bool(is), "cannot open truth file: " + path);
    const ObservationSeries series = read_observations_csv(is, path, grid);
    require(series.count() == grid.n_days(),
            path + ": truth file must provide a value for every day (" +
                std::to_string(series.count()) + " of " + std::to_string(grid.n_days()) + ")");
    std::vector<double> truth(static_cast<size_t>(grid.n_days()));
    for (int t = 0; t < grid.n_days(); ++t) truth[size_t(t)] = series.value(t);
    return truth;
}

inline void write_truth_csv(std::ostream& os, const TimeGrid& grid,
                            const std::vector<double>& truth) {
    require(int(truth.size()) == grid.n_days(), "truth must match the grid");
    os << "# cropda-truth v1\n";
    os << "date,lai\n";
    for (int t = 0; t < grid.n_days(); ++t)
        os << grid.date(t).to_string() << "," << format_double(truth[size_t(t)]) << "\n";
}

// ---------------------------------------------------------------------------
// Run report JSON

struct RunReport {
    std::string crop;
    std::uint64_t seed = 0;
    bool deterministic = false;
    std::string start_date;
    int n_days = 0;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<double> truth;  // empty when no truth was supplied
    ObservationSeries observations = ObservationSeries(0);
    std::vector<MethodSeries> estimates;
    std::vector<MetricReport> metrics;  // empty when no truth was supplied
    std::vector<EnkfUpdateRecord> enkf_updates;
    double wall_seconds = 0.0;
};

inline ordered_json run_report_to_json(const RunReport& r) {
    ordered_json j;
    j["format"] = "cropda-run-report";
    j["version"] = 1;
    j["crop"] = r.crop;
    j["seed"] = r.seed;
    j["deterministic"] = r.deterministic;
    j["start_date"] = r.start_date;
    j["n_days"] = r.n_days;
    ordered_json cfg = ordered_json::object();
    for (const auto& [k, v] : r.config) cfg[k] = v;
    j["config"] = std::move(cfg);

    ordered_json series = ordered_json::object();
    if (r.truth.empty()) {
        series["truth"] = nullptr;
    } else {
        series["truth"] = r.truth;
    }
    ordered_json obs = ordered_json::array();
    for (int t = 0; t < r.observations.size(); ++t) {
        if (r.observations.has(t))
            obs.push_back(r.observations.value(t));
        else
            obs.push_back(nullptr);
    }
    series["observations"] = std::move(obs);
    ordered_json est = ordered_json::array();
    for (const auto& e : r.estimates) {
        ordered_json one;
        one["method"] = e.method;
        one["values"] = e.series;
        est.push_back(std::move(one));
    }
    series["estimates"] = std::move(est);
    j["series"] = std::move(series);

    ordered_json mets = ordered_json::array();
    for (const auto& m : r.metrics) {
        ordered_json one;
        one["method"] = m.method;
        one["mse"] = m.mse;
        one["rmse"] = m.rmse;
        one["mae"] = m.mae;
        one["n"] = m.n;
        mets.push_back(std::move(one));
    }
    j["metrics"] = std::move(mets);

    ordered_json upd = ordered_json::array();
    for (const auto& u : r.enkf_updates) {
        ordered_json one;
        one["day"] = u.day;
        one["n_obs"] = u.diagnostics.n_obs;
        one["lambda"] = u.diagnostics.lambda;
        one["gain_norm"] = u.diagnostics.gain_norm;
        one["innovation_rms"] = u.diagnostics.innovation_rms;
        upd.push_back(std::move(one));
    }
    j["diagnostics"] = ordered_json::object();
    j["diagnostics"]["enkf_updates"] = std::move(upd);
    j["timing"] = ordered_json::object();
    j["timing"]["wall_seconds"] = r.wall_seconds;
    return j;
}

inline std::string run_report_to_string(const RunReport& r) {
    return run_report_to_json(r).dump(2) + "\n";
}

inline RunReport run_report_from_json(const ordered_json& j) {
    require(j.is_object(), "run report must be a JSON object");
    static const std::vector<std::string> kAllowed = {
        "format", "version", "crop",    "seed",        "deterministic", "start_date",
        "n_days", "config",  "series",  "metrics",     "diagnostics",   "timing"};
    for (const auto& item : j.items())
        require(std::find(kAllowed.begin(), kAllowed.end(), item.key()) != kAllowed.end(),
                "run report: unknown field '" + item.key() + "'");
    require(j.at("format").get<std::string>() == "cropda-run-report",
            "not a run report (format field mismatch)");
    require(j.at("version").get<int>() == 1, "unsupported run report version");

    RunReport r;
    r.crop = j.at("crop").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.deterministic = j.at("deterministic").get<bool>();
    r.start_date = j.at("start_date").get<std::string>();
    r.n_days = j.at("n_days").get<int>();
    for (const auto& item : j.at("config").items())
        r.config.emplace_back(item.key(), item.value().get<std::string>());

    const ordered_json& series = j.at("series");
    if (!series.at("truth").is_null()) r.truth = series.at("truth").get<std::vector<double>>();
    const ordered_json& obs = series.at("observations");
    require(int(obs.size()) == r.n_days, "run report: observations length mismatch");
    r.observations = ObservationSeries(r.n_days);
    for (int t = 0; t < r.n_days; ++t)
        if (!obs.at(size_t(t)).is_null()) r.observations.set(t, obs.at(size_t(t)).get<double>());
    for (const auto& e : series.at("estimates")) {
        MethodSeries ms;
        ms.method = e.at("method").get<std::string>();
        ms.series = e.at("values").get<std::vector<double>>();
        require(int(ms.series.size()) == r.n_days, "run report: estimate length mismatch");
        r.estimates.push_back(std::move(ms));
    }
    for (const auto& m : j.at("metrics")) {
        MetricReport rep;
        rep.method = m.at("method").get<std::string>();
        rep.mse = m.at("mse").get<double>();
        rep.rmse = m.at("rmse").get<double>();
        rep.mae = m.at("mae").get<double>();
        rep.n = m.at("n").get<int>();
        r.metrics.push_back(std::move(rep));
    }
    for (const auto& u : j.at("diagnostics").at("enkf_updates")) {
        EnkfUpdateRecord rec;
        rec.day = u.at("day").get<int>();
        rec.diagnostics.n_obs = u.at("n_obs").get<int>();
        rec.diagnostics.lambda = u.at("lambda").get<double>();
        rec.diagnostics.gain_norm = u.at("gain_norm").get<double>();
        rec.diagnostics.innovation_rms = u.at("innovation_rms").get<double>();
        r.enkf_updates.push_back(rec);
    }
    r.wall_seconds = j.at("timing").at("wall_seconds").get<double>();
    return r;
}

inline RunReport read_run_report_file(const std::string& path) {
    std::ifstream is(path);
    require(bool(is), "cannot open run report: " + path);
    ordered_json j;
    try {
        is >> j;
    } catch (const std::exception& ex) {
        throw std::runtime_error(path + ": invalid JSON: " + ex.what());
    }
    try {
        return run_report_from_json(j);
    } catch (const std::exception& ex) {
        throw std::runtime_error(path + ": " + ex.what());
    }
}

inline void write_run_report_file(const std::string& path, const RunReport& r) {
    std::ofstream os(path);
    require(bool(os), "cannot open run report for writing: " + path);
    os << run_report_to_string(r);
    require(bool(os), "failed writing run report: " + path);
}

// ---------------------------------------------------------------------------
// Tidy plot data: one (day, series, value) row per defined point.

inline void write_plot_csv(std::ostream& os, const RunReport& r) {
    os << "# cropda-plot v1\n";
    os << "day,series,value\n";
    for (int t = 0; t < int(r.truth.size()); ++t)
        os << t << ",truth," << format_double(r.truth[size_t(t)]) << "\n";
    for (int t = 0; t < r.observations.size(); ++t)
        if (r.observations.has(t))
            os << t << ",observation," << format_double(r.observations.value(t)) << "\n";
    for (const auto& e : r.estimates) {
        std::string name = e.method;
        for (auto& c : name)
            if (c == '-') c = '_';
        for (int t = 0; t < int(e.series.size()); ++t)
            os << t << "," << name << "," << format_double(e.series[size_t(t)]) << "\n";
    }
}

inline void ensure_directory(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    require(!ec, "cannot create directory " + path + ": " + ec.message());
}

}  // namespace cropda
