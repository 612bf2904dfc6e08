#pragma once

// Point metrics (MSE, RMSE, MAE) and the per-method result table.

#include "cropda/core.hpp"

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace cropda {

namespace detail {
inline void check_pair(const std::vector<double>& truth, const std::vector<double>& pred) {
    require(!truth.empty(), "metrics need at least one sample");
    require(truth.size() == pred.size(), "metrics need equal-length series");
}
}  // namespace detail

inline double mse(const std::vector<double>& truth, const std::vector<double>& pred) {
    detail::check_pair(truth, pred);
    double acc = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        const double r = truth[i] - pred[i];
        acc += r * r;
    }
    return acc / double(truth.size());
}

inline double rmse(const std::vector<double>& truth, const std::vector<double>& pred) {
    return std::sqrt(mse(truth, pred));
}

inline double mae(const std::vector<double>& truth, const std::vector<double>& pred) {
    detail::check_pair(truth, pred);
    double acc = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) acc += std::abs(truth[i] - pred[i]);
    return acc / double(truth.size());
}

struct MetricReport {
    std::string method;
    double mse = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
    int n = 0;
};

inline MetricReport compute_metrics(const std::string& method, const std::vector<double>& truth,
                                    const std::vector<double>& pred) {
    MetricReport r;
    r.method = method;
    r.mse = mse(truth, pred);
    r.rmse = std::sqrt(r.mse);
    r.mae = mae(truth, pred);
    r.n = int(truth.size());
    return r;
}

// One row per method, in input order.
inline std::vector<MetricReport> metric_table(
    const std::vector<double>& truth,
    const std::vector<std::pair<std::string, std::vector<double>>>& predictions) {
    std::vector<MetricReport> rows;
    rows.reserve(predictions.size());
    for (const auto& [name, pred] : predictions) rows.push_back(compute_metrics(name, truth, pred));
    return rows;
}

inline std::string format_metric_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// Human-readable row: "method, mse, rmse, mae" with 9 significant digits.
inline std::string metric_row_text(const MetricReport& r) {
    return r.method + ", " + format_metric_value(r.mse) + ", " + format_metric_value(r.rmse) +
           ", " + format_metric_value(r.mae);
}

// CSV with the fixed column order method,mse,rmse,mae.
inline std::string metric_table_csv(const std::vector<MetricReport>& rows) {
    std::string out = "method,mse,rmse,mae\n";
    for (const auto& r : rows) {
        out += r.method;
        out += ',';
        out += format_metric_value(r.mse);
        out += ',';
        out += format_metric_value(r.rmse);
        out += ',';
        out += format_metric_value(r.mae);
        out += '\n';
    }
    return out;
}

}  // namespace cropda
