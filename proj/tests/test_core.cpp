#include "cropda/core.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <numeric>
#include <vector>

using namespace cropda;

// ---------------------------------------------------------------------------
// Calendar dates and the daily grid

TEST_CASE("dates parse, print, and shift across month and year boundaries") {
    const Date d = Date::parse("2022-05-01");
    CHECK(d.to_string() == "2022-05-01");
    CHECK(d.plus_days(30).to_string() == "2022-05-31");
    CHECK(d.plus_days(31).to_string() == "2022-06-01");
    CHECK(Date::parse("2021-12-31").plus_days(1).to_string() == "2022-01-01");
    CHECK(Date::parse("2020-02-28").plus_days(1).to_string() == "2020-02-29");
    CHECK(Date::parse("2022-10-15") - d == 167);
}

TEST_CASE("a 168-day grid starting May 1 ends on October 15") {
    const TimeGrid grid = make_time_grid(Date::parse("2022-05-01"), 168);
    CHECK(grid.n_days() == 168);
    CHECK(grid.date(0).to_string() == "2022-05-01");
    CHECK(grid.date(167).to_string() == "2022-10-15");
}

TEST_CASE("grid day indices and dates map bijectively") {
    const TimeGrid grid = make_time_grid(Date::parse("2022-05-01"), 168);
    for (int t = 0; t < grid.n_days(); ++t) CHECK(grid.day_of(grid.date(t)) == t);
    CHECK(grid.contains(Date::parse("2022-05-01")));
    CHECK(grid.contains(Date::parse("2022-10-15")));
    CHECK_FALSE(grid.contains(Date::parse("2022-10-16")));
    CHECK_FALSE(grid.contains(Date::parse("2022-04-30")));
}

TEST_CASE("single-day grids are allowed, empty grids are not") {
    const TimeGrid one = make_time_grid(Date::parse("2022-05-01"), 1);
    CHECK(one.n_days() == 1);
    CHECK_THROWS_AS(make_time_grid(Date::parse("2022-05-01"), 0), std::invalid_argument);
    CHECK_THROWS_AS(make_time_grid(Date::parse("2022-05-01"), -3), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Seeded random streams

TEST_CASE("same seed reproduces the identical uniform stream") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        CHECK(u == b.uniform());
        CHECK(u > 0.0);
        CHECK(u <= 1.0);
    }
}

TEST_CASE("substreams with distinct ids diverge, equal ids agree") {
    Rng a = Rng::substream(42, 1);
    Rng b = Rng::substream(42, 2);
    Rng c = Rng::substream(42, 1);
    bool any_diff = false;
    for (int i = 0; i < 64; ++i) {
        const double ua = a.uniform();
        if (ua != b.uniform()) any_diff = true;
        CHECK(ua == c.uniform());
    }
    CHECK(any_diff);
}

TEST_CASE("uniform_int covers its closed range") {
    Rng rng(7);
    bool lo_hit = false, hi_hit = false;
    for (int i = 0; i < 2000; ++i) {
        const int v = rng.uniform_int(2, 5);
        CHECK(v >= 2);
        CHECK(v <= 5);
        lo_hit = lo_hit || v == 2;
        hi_hit = hi_hit || v == 5;
    }
    CHECK(lo_hit);
    CHECK(hi_hit);
}

TEST_CASE("noise vectors are deterministic and match their target moments") {
    // Zero sigma collapses to the zero vector.
    const NoiseVector zero = draw_noise_vector(99, 50, 0.0);
    REQUIRE(zero.size() == 50);
    for (int i = 0; i < 50; ++i) CHECK(zero.epsilons[i] == 0.0);

    // Same seed, bitwise-identical draws.
    const NoiseVector a = draw_noise_vector(7, 50, 0.1);
    const NoiseVector b = draw_noise_vector(7, 50, 0.1);
    REQUIRE(a.size() == b.size());
    for (int i = 0; i < a.size(); ++i) CHECK(a.epsilons[i] == b.epsilons[i]);

    // Law-of-large-numbers bounds computed here, not assumed: for M draws of
    // sigma 0.1 the sample mean should land within 3*sigma/sqrt(M) of zero
    // and the sample standard deviation within 5% of sigma.
    const int M = 10000;
    const double sigma = 0.1;
    const NoiseVector big = draw_noise_vector(7, M, sigma);
    double sum = 0.0;
    for (int i = 0; i < M; ++i) sum += big.epsilons[i];
    const double mean = sum / M;
    double ss = 0.0;
    for (int i = 0; i < M; ++i) ss += (big.epsilons[i] - mean) * (big.epsilons[i] - mean);
    const double sd = std::sqrt(ss / (M - 1));
    CHECK(std::abs(mean) < 3.0 * sigma / std::sqrt(double(M)));
    CHECK(std::abs(sd - sigma) < 0.05 * sigma);

    CHECK_THROWS_AS(draw_noise_vector(1, 0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(draw_noise_vector(1, 10, -0.1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Ensemble matrix

TEST_CASE("ensemble means match an independent naive summation") {
    Rng rng(11);
    Eigen::MatrixXd vals(6, 50);
    for (int t = 0; t < 6; ++t)
        for (int m = 0; m < 50; ++m) vals(t, m) = rng.normal(2.0, 1.0);
    const EnsembleMatrix ens(vals);
    REQUIRE(ens.state_dim() == 6);
    REQUIRE(ens.members() == 50);
    for (int t = 0; t < 6; ++t) {
        double acc = 0.0;
        for (int m = 0; m < 50; ++m) acc += vals(t, m);
        CHECK(ensemble_mean(ens, t) == Catch::Approx(acc / 50.0).margin(1e-12));
    }
}

TEST_CASE("ensemble mean handles degenerate shapes and bad days") {
    Eigen::MatrixXd vals(1, 3);
    vals << 1.0, 2.0, 3.0;
    const EnsembleMatrix ens(vals);
    CHECK(ensemble_mean(ens, 0) == 2.0);
    CHECK_THROWS_AS(ensemble_mean(ens, 1), std::invalid_argument);
    CHECK_THROWS_AS(ensemble_mean(ens, -1), std::invalid_argument);

    Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(4, 5, 3.25);
    const EnsembleMatrix constant(flat);
    for (int t = 0; t < 4; ++t) CHECK(ensemble_mean(constant, t) == 3.25);
}

TEST_CASE("anomalies subtract the per-day mean") {
    Eigen::MatrixXd vals(2, 4);
    vals << 1, 2, 3, 4, 10, 10, 10, 10;
    const EnsembleMatrix ens(vals);
    const Eigen::MatrixXd a = ens.anomalies();
    CHECK(a.row(0).sum() == Catch::Approx(0.0).margin(1e-14));
    CHECK(a.row(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a(0, 0) == Catch::Approx(-1.5));
    CHECK(a(0, 3) == Catch::Approx(1.5));
}

// ---------------------------------------------------------------------------
// Observation series and the sentinel matrix

TEST_CASE("observation series tracks presence explicitly") {
    ObservationSeries obs(5);
    CHECK(obs.size() == 5);
    CHECK(obs.count() == 0);
    obs.set(2, 1.5);
    CHECK(obs.has(2));
    CHECK(obs.value(2) == 1.5);
    CHECK(obs.count() == 1);
    CHECK_FALSE(obs.has(0));
    CHECK_THROWS_AS(obs.value(0), std::invalid_argument);
    obs.clear(2);
    CHECK_FALSE(obs.has(2));
    CHECK(obs.count() == 0);
    CHECK_THROWS_AS(obs.set(2, -0.5), std::invalid_argument);
    CHECK_THROWS_AS(obs.set(5, 1.0), std::invalid_argument);
}

TEST_CASE("sentinel matrix carries perturbed rows for observed days only") {
    SECTION("single observed day, zero noise") {
        ObservationSeries obs(1);
        obs.set(0, 2.0);
        NoiseVector nv;
        nv.epsilons = Eigen::VectorXd::Zero(3);
        const Eigen::MatrixXd V = to_sentinel_matrix(obs, 3, nv);
        REQUIRE(V.rows() == 1);
        REQUIRE(V.cols() == 3);
        for (int m = 0; m < 3; ++m) CHECK(V(0, m) == 2.0);
    }
    SECTION("missing day becomes a full row of -1") {
        ObservationSeries obs(1);
        NoiseVector nv;
        nv.epsilons = Eigen::VectorXd::Zero(3);
        const Eigen::MatrixXd V = to_sentinel_matrix(obs, 3, nv);
        for (int m = 0; m < 3; ++m) CHECK(V(0, m) == -1.0);
    }
    SECTION("mixed days add member noise to the observed rows") {
        ObservationSeries obs(2);
        obs.set(0, 1.0);
        NoiseVector nv;
        nv.epsilons = Eigen::VectorXd(2);
        nv.epsilons << 0.1, -0.1;
        const Eigen::MatrixXd V = to_sentinel_matrix(obs, 2, nv);
        CHECK(V(0, 0) == Catch::Approx(1.1));
        CHECK(V(0, 1) == Catch::Approx(0.9));
        CHECK(V(1, 0) == -1.0);
        CHECK(V(1, 1) == -1.0);
    }
    SECTION("noise length must equal the member count") {
        ObservationSeries obs(1);
        NoiseVector nv;
        nv.epsilons = Eigen::VectorXd::Zero(2);
        CHECK_THROWS_AS(to_sentinel_matrix(obs, 3, nv), std::invalid_argument);
    }
    SECTION("shape is always days x members") {
        ObservationSeries obs(7);
        obs.set(3, 0.5);
        NoiseVector nv;
        nv.epsilons = Eigen::VectorXd::Zero(4);
        const Eigen::MatrixXd V = to_sentinel_matrix(obs, 4, nv);
        CHECK(V.rows() == 7);
        CHECK(V.cols() == 4);
    }
}

// ---------------------------------------------------------------------------
// Deterministic fork-join

TEST_CASE("parallel_for fills identical slots for any worker count") {
    const int n = 137;
    auto run = [&](int threads) {
        std::vector<double> out(static_cast<size_t>(n), 0.0);
        parallel_for(n, threads, [&](int i) {
            Rng rng = Rng::substream(5, std::uint64_t(i));
            out[size_t(i)] = rng.normal(0.0, 1.0);
        });
        return out;
    };
    const std::vector<double> serial = run(1);
    for (int threads : {2, 4, 8}) {
        const std::vector<double> parallel = run(threads);
        REQUIRE(parallel.size() == serial.size());
        for (size_t i = 0; i < serial.size(); ++i) CHECK(parallel[i] == serial[i]);
    }
}

TEST_CASE("parallel_for runs every index exactly once") {
    const int n = 64;
    std::vector<std::atomic<int>> hits(static_cast<size_t>(n));
    for (auto& h : hits) h = 0;
    parallel_for(n, 4, [&](int i) { hits[size_t(i)]++; });
    for (const auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("parallel_for propagates worker exceptions") {
    CHECK_THROWS_AS(parallel_for(8, 4,
                                 [&](int i) {
                                     if (i == 5) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
    // Zero-length loops are a no-op.
    parallel_for(0, 4, [&](int) { FAIL("must not be called"); });
}

TEST_CASE("numerical failures carry the day index") {
    const NumericalError err(17, "singular innovation covariance");
    CHECK(err.day() == 17);
    CHECK(std::string(err.what()).find("17") != std::string::npos);
}
