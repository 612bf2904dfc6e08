#pragma once

// Core containers for the assimilation toolkit: daily time grid, ensemble
// trajectory matrix, observation series with missing days, and the seeded
// noise draws everything else builds on.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cropda {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Linear-algebra failure inside a filter step (singular innovation covariance
// after regularization). Carries the day index of the failing update.
class NumericalError : public std::runtime_error {
public:
    NumericalError(int day, const std::string& what)
        : std::runtime_error("day " + std::to_string(day) + ": " + what), day_(day) {}
    int day() const { return day_; }

private:
    int day_;
};

// ---------------------------------------------------------------------------
// Calendar dates (daily resolution)

class Date {
public:
    Date() : days_(0) {}
    Date(int year, int month, int day) {
        namespace chr = std::chrono;
        chr::year_month_day ymd{chr::year{year}, chr::month{unsigned(month)}, chr::day{unsigned(day)}};
        require(ymd.ok(), "invalid calendar date " + std::to_string(year) + "-" +
                              std::to_string(month) + "-" + std::to_string(day));
        days_ = chr::sys_days{ymd}.time_since_epoch().count();
    }

    static Date parse(const std::string& iso) {
        int y = 0, m = 0, d = 0;
        char extra = 0;
        if (std::sscanf(iso.c_str(), "%d-%d-%d%c", &y, &m, &d, &extra) != 3)
            throw std::invalid_argument("unparsable date '" + iso + "' (expected YYYY-MM-DD)");
        return Date(y, m, d);
    }

    std::string to_string() const {
        namespace chr = std::chrono;
        chr::year_month_day ymd{chr::sys_days{chr::days{days_}}};
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", int(ymd.year()),
                      unsigned(ymd.month()), unsigned(ymd.day()));
        return buf;
    }

    Date plus_days(long n) const {
        Date d;
        d.days_ = days_ + n;
        return d;
    }
    long operator-(const Date& other) const { return days_ - other.days_; }
    bool operator==(const Date& o) const { return days_ == o.days_; }
    bool operator!=(const Date& o) const { return days_ != o.days_; }
    bool operator<(const Date& o) const { return days_ < o.days_; }

private:
    long days_;  // days since 1970-01-01
};

// Daily time grid: day indices 0..n_days-1 map bijectively to calendar dates.
class TimeGrid {
public:
    TimeGrid(Date start, int n_days) : start_(start), n_days_(n_days) {
        require(n_days >= 1, "TimeGrid needs n_days >= 1, got " + std::to_string(n_days));
    }

    int n_days() const { return n_days_; }
    Date start_date() const { return start_; }
    Date date(int day) const {
        require(day >= 0 && day < n_days_, "day index out of grid");
        return start_.plus_days(day);
    }
    int day_of(const Date& d) const {
        long idx = d - start_;
        require(idx >= 0 && idx < n_days_, "date " + d.to_string() + " outside grid");
        return int(idx);
    }
    bool contains(const Date& d) const {
        long idx = d - start_;
        return idx >= 0 && idx < n_days_;
    }

private:
    Date start_;
    int n_days_;
};

inline TimeGrid make_time_grid(const Date& start, int n_days) { return TimeGrid(start, n_days); }

// ---------------------------------------------------------------------------
// Seeded randomness
//
// Draws are deterministic for a fixed seed independent of platform and thread
// count: substreams are derived by hashing (seed, stream id), and the
// Gaussian transform is an explicit Box-Muller with no cached state.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    // Independent child stream; same (seed, id) always gives the same stream.
    static Rng substream(std::uint64_t seed, std::uint64_t stream_id) {
        return Rng(splitmix64(seed) ^ splitmix64(0x5851f42d4c957f2dULL * (stream_id + 1)));
    }

    // Uniform in (0, 1].
    double uniform() { return 1.0 - double(engine_() >> 11) * 0x1.0p-53; }

    double normal(double mean = 0.0, double sigma = 1.0) {
        const double u1 = uniform();
        const double u2 = uniform();
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + sigma * z;
    }

    // Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) {
        require(hi >= lo, "uniform_int: empty range");
        return lo + int(engine_() % std::uint64_t(hi - lo + 1));
    }

private:
    std::mt19937_64 engine_;
};

// M zero-mean Gaussian draws with common standard deviation.
struct NoiseVector {
    Eigen::VectorXd epsilons;
    double sigma = 0.0;

    int size() const { return int(epsilons.size()); }
};

inline NoiseVector draw_noise_vector(std::uint64_t seed, int M, double sigma) {
    require(M >= 1, "draw_noise_vector needs M >= 1");
    require(sigma >= 0.0 && std::isfinite(sigma), "draw_noise_vector needs sigma >= 0");
    Rng rng(seed);
    NoiseVector nv;
    nv.sigma = sigma;
    nv.epsilons.resize(M);
    for (int i = 0; i < M; ++i) nv.epsilons[i] = rng.normal(0.0, sigma);
    return nv;
}

// ---------------------------------------------------------------------------
// Ensemble matrix: rows are days 0..state_dim-1, columns are the M members.

class EnsembleMatrix {
public:
    EnsembleMatrix() = default;
    explicit EnsembleMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
        require(values_.allFinite(), "EnsembleMatrix requires finite values");
    }

    int state_dim() const { return int(values_.rows()); }
    int members() const { return int(values_.cols()); }

    const Eigen::MatrixXd& matrix() const { return values_; }
    double operator()(int day, int member) const { return values_(day, member); }

    // Per-day ensemble mean over members.
    Eigen::VectorXd mean_trajectory() const { return values_.rowwise().mean(); }

    double mean_at(int day) const {
        require(day >= 0 && day < state_dim(), "ensemble mean: day out of range");
        return values_.row(day).mean();
    }

    // Member deviations from the ensemble mean, same shape as the matrix.
    Eigen::MatrixXd anomalies() const { return values_.colwise() - mean_trajectory(); }

private:
    Eigen::MatrixXd values_;
};

inline double ensemble_mean(const EnsembleMatrix& ens, int day) { return ens.mean_at(day); }

// ---------------------------------------------------------------------------
// Observation series: one optional LAI value per day of the grid.
// Missing days are represented structurally here and only lowered to the -1
// sentinel when building the matrix form for the filter.

class ObservationSeries {
public:
    static constexpr double kSentinel = -1.0;

    explicit ObservationSeries(int n_days)
        : values_(size_t(n_days), 0.0), present_(size_t(n_days), 0) {
        require(n_days >= 0, "ObservationSeries needs n_days >= 0");
    }

    int size() const { return int(values_.size()); }

    void set(int day, double value) {
        require(day >= 0 && day < size(), "observation day out of range");
        require(std::isfinite(value) && value >= 0.0,
                "observation must be finite and >= 0, got " + std::to_string(value));
        values_[size_t(day)] = value;
        present_[size_t(day)] = 1;
    }

    void clear(int day) {
        require(day >= 0 && day < size(), "observation day out of range");
        present_[size_t(day)] = 0;
        values_[size_t(day)] = 0.0;
    }

    bool has(int day) const {
        require(day >= 0 && day < size(), "observation day out of range");
        return present_[size_t(day)] != 0;
    }

    double value(int day) const {
        require(has(day), "no observation on day " + std::to_string(day));
        return values_[size_t(day)];
    }

    int count() const {
        int n = 0;
        for (auto p : present_) n += p;
        return n;
    }

private:
    std::vector<double> values_;
    std::vector<std::uint8_t> present_;
};

// Lower an observation series to the filter's matrix form: each observed day t
// becomes the row [v(t)+eps_1, ..., v(t)+eps_M]; missing days become rows of
// the -1 sentinel in every member column.
inline Eigen::MatrixXd to_sentinel_matrix(const ObservationSeries& obs, int M,
                                          const NoiseVector& noise) {
    require(noise.size() == M, "noise vector length must equal M");
    Eigen::MatrixXd V(obs.size(), M);
    for (int t = 0; t < obs.size(); ++t) {
        if (obs.has(t))
            V.row(t) = (noise.epsilons.array() + obs.value(t)).transpose();
        else
            V.row(t).setConstant(ObservationSeries::kSentinel);
    }
    return V;
}

// ---------------------------------------------------------------------------
// Deterministic fork-join helper. Indices are split into contiguous chunks;
// each fn(i) must write only to slot i of preallocated output, so the result
// is identical for any thread count.

inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int lo = w * chunk;
        const int hi = std::min(n, lo + chunk);
        pool.emplace_back([&, w, lo, hi] {
            try {
                for (int i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[size_t(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace cropda
