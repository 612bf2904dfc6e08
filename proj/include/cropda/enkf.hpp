#pragma once

// Augmented-state ensemble Kalman filter on daily LAI trajectories:
// day-selection observation operator, sample covariances, Kalman gain with
// Gaspari-Cohn localization, adaptive covariance inflation, and the
// perturbed-observation update.

#include "cropda/core.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace cropda {

// ---------------------------------------------------------------------------
// Observation operator H: selects the trajectory days that carry a valid
// (non-sentinel) observation. Reduces to the identity when every day is
// observed.

class ObservationOperator {
public:
    ObservationOperator(std::vector<int> selected_days, int state_dim)
        : days_(std::move(selected_days)), state_dim_(state_dim) {
        require(state_dim_ >= 0, "ObservationOperator needs state_dim >= 0");
        for (size_t i = 0; i < days_.size(); ++i) {
            require(days_[i] >= 0 && days_[i] < state_dim_, "selected day out of state range");
            require(i == 0 || days_[i] > days_[i - 1], "selected days must be strictly sorted");
        }
    }

    int n_obs() const { return int(days_.size()); }
    int state_dim() const { return state_dim_; }
    const std::vector<int>& selected_days() const { return days_; }

    // Rows of X at the selected days (H * X).
    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
        Eigen::MatrixXd out(n_obs(), X.cols());
        for (int i = 0; i < n_obs(); ++i) out.row(i) = X.row(days_[size_t(i)]);
        return out;
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
        Eigen::VectorXd out(n_obs());
        for (int i = 0; i < n_obs(); ++i) out[i] = x[days_[size_t(i)]];
        return out;
    }

    // Columns of X at the selected days (X * H^T).
    Eigen::MatrixXd apply_right_transposed(const Eigen::MatrixXd& X) const {
        Eigen::MatrixXd out(X.rows(), n_obs());
        for (int i = 0; i < n_obs(); ++i) out.col(i) = X.col(days_[size_t(i)]);
        return out;
    }

    // Dense k x t selection matrix, one 1 per row.
    Eigen::MatrixXd matrix() const {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n_obs(), state_dim_);
        for (int i = 0; i < n_obs(); ++i) H(i, days_[size_t(i)]) = 1.0;
        return H;
    }

private:
    std::vector<int> days_;
    int state_dim_ = 0;
};

// A row of the sentinel matrix marks a missing day with -1 in every member
// column; anything else is a valid observation row.
inline bool is_sentinel_row(const Eigen::MatrixXd& V, int row) {
    return (V.row(row).array() == ObservationSeries::kSentinel).all();
}

inline ObservationOperator build_observation_operator(const Eigen::MatrixXd& obs_matrix) {
    std::vector<int> days;
    for (int t = 0; t < obs_matrix.rows(); ++t)
        if (!is_sentinel_row(obs_matrix, t)) days.push_back(t);
    return ObservationOperator(std::move(days), int(obs_matrix.rows()));
}

// ---------------------------------------------------------------------------
// Observation-error covariance Re. Diagonal sigma^2 I by default; optionally
// estimated from the drawn member perturbations (rank-one, relies on the
// gain's jitter regularization).

struct ObsNoiseModel {
    double sigma_obs = 0.1;
    std::optional<Eigen::VectorXd> perturbations;  // set to estimate Re from draws

    static ObsNoiseModel diagonal(double sigma) {
        require(sigma >= 0.0 && std::isfinite(sigma), "obs sigma must be finite and >= 0");
        ObsNoiseModel m;
        m.sigma_obs = sigma;
        return m;
    }

    static ObsNoiseModel from_perturbations(const NoiseVector& noise) {
        ObsNoiseModel m;
        m.sigma_obs = noise.sigma;
        m.perturbations = noise.epsilons;
        return m;
    }

    Eigen::MatrixXd materialize(int k) const {
        require(k >= 0, "Re needs k >= 0");
        if (!perturbations) {
            return sigma_obs * sigma_obs * Eigen::MatrixXd::Identity(k, k);
        }
        // Every observed day shares the one drawn perturbation vector, so the
        // obs-space anomaly matrix has identical rows.
        const Eigen::VectorXd& e = *perturbations;
        const int M = int(e.size());
        require(M >= 2, "perturbation-estimated Re needs M >= 2");
        Eigen::RowVectorXd centered = (e.array() - e.mean()).transpose();
        Eigen::MatrixXd E(k, M);
        for (int i = 0; i < k; ++i) E.row(i) = centered;
        return E * E.transpose() / double(M - 1);
    }
};

struct LocalizationSpec {
    bool enabled = false;
    double radius_days = 10.0;

    static LocalizationSpec off() { return {}; }
    static LocalizationSpec with_radius(double l) {
        require(l > 0.0, "localization radius must be > 0");
        return {true, l};
    }
};

struct InflationState {
    bool enabled = false;
    double lambda = 1.0;  // last factor applied, >= 1

    static InflationState off() { return {}; }
    static InflationState on() { return {true, 1.0}; }
};

// ---------------------------------------------------------------------------
// Covariances and gain

// Ensemble sampling covariance Pe = A' A'^T / (M-1), symmetric PSD.
inline Eigen::MatrixXd forecast_covariance(const EnsembleMatrix& ens) {
    require(ens.members() >= 2, "forecast covariance needs M >= 2");
    const Eigen::MatrixXd anomalies = ens.anomalies();
    return anomalies * anomalies.transpose() / double(ens.members() - 1);
}

// Canonical fifth-order piecewise rational taper, compact support [0, 2l].
inline double gaspari_cohn(double e, double l) {
    require(e >= 0.0 && std::isfinite(e), "gaspari_cohn needs distance e >= 0");
    require(l > 0.0 && std::isfinite(l), "gaspari_cohn needs radius l > 0");
    const double c = e / l;
    if (c >= 2.0) return 0.0;
    if (c <= 1.0) {
        return 1.0 + c * c * (-5.0 / 3.0 + c * (5.0 / 8.0 + c * (1.0 / 2.0 - c / 4.0)));
    }
    return 4.0 - 5.0 * c + c * c * (5.0 / 3.0 + c * (5.0 / 8.0 + c * (-1.0 / 2.0 + c / 12.0))) -
           (2.0 / 3.0) / c;
}

namespace detail {

// Schur taper for the state-to-obs block (t x k): distance is |day_i - day_j|.
inline void taper_state_obs(Eigen::MatrixXd& PeHt, const ObservationOperator& H,
                            const LocalizationSpec& loc) {
    if (!loc.enabled) return;
    for (int j = 0; j < H.n_obs(); ++j) {
        const int obs_day = H.selected_days()[size_t(j)];
        for (int i = 0; i < PeHt.rows(); ++i)
            PeHt(i, j) *= gaspari_cohn(std::abs(i - obs_day), loc.radius_days);
    }
}

// Schur taper for the obs-to-obs block (k x k).
inline void taper_obs_obs(Eigen::MatrixXd& HPeHt, const ObservationOperator& H,
                          const LocalizationSpec& loc) {
    if (!loc.enabled) return;
    const auto& days = H.selected_days();
    for (int a = 0; a < HPeHt.rows(); ++a)
        for (int b = 0; b < HPeHt.cols(); ++b)
            HPeHt(a, b) *= gaspari_cohn(std::abs(days[size_t(a)] - days[size_t(b)]),
                                        loc.radius_days);
}

}  // namespace detail

// K = (rho o Pe H^T) (rho o (H Pe H^T) + Re)^{-1}. The innovation covariance
// gets a small diagonal jitter (1e-10 * trace / k) before factorization; a
// factorization failure after that is reported with the day index.
inline Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& Pe, const ObservationOperator& H,
                                   const Eigen::MatrixXd& Re, const LocalizationSpec& loc,
                                   int day_for_errors = -1) {
    const int t = int(Pe.rows());
    const int k = H.n_obs();
    require(Pe.cols() == t, "Pe must be square");
    require(H.state_dim() == t, "H state dim must match Pe");
    require(Re.rows() == k && Re.cols() == k, "Re must be k x k");
    if (k == 0) return Eigen::MatrixXd::Zero(t, 0);

    Eigen::MatrixXd PeHt = H.apply_right_transposed(Pe);  // t x k
    detail::taper_state_obs(PeHt, H, loc);

    Eigen::MatrixXd S = H.apply(H.apply_right_transposed(Pe));  // k x k
    detail::taper_obs_obs(S, H, loc);
    S += Re;
    const double jitter = 1e-10 * S.trace() / double(k);
    S.diagonal().array() += jitter;

    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
        throw NumericalError(day_for_errors,
                             "innovation covariance is singular after regularization");
    // K^T = S^{-1} (Pe H^T)^T
    return llt.solve(PeHt.transpose()).transpose();
}

// ---------------------------------------------------------------------------
// Adaptive inflation (time-dependent factor from the innovation statistics)

// lambda_t = max(1, (d^T Re^{-1} d - k) / trace(Re^{-1/2} H Pe H^T Re^{-1/2})).
// Returns 1 when there are no observations or the trace denominator vanishes.
inline double inflation_factor(const Eigen::VectorXd& d, const Eigen::MatrixXd& Re,
                               const ObservationOperator& H, const Eigen::MatrixXd& Pe) {
    const int k = int(d.size());
    if (k == 0) return 1.0;
    require(Re.rows() == k && Re.cols() == k, "Re must be k x k");

    Eigen::MatrixXd HPeHt = H.apply(H.apply_right_transposed(Pe));
    Eigen::LDLT<Eigen::MatrixXd> ldlt(Re);
    if (ldlt.info() != Eigen::Success) return 1.0;
    // trace(Re^{-1/2} HPeHt Re^{-1/2}) == trace(Re^{-1} HPeHt)
    const double denom = ldlt.solve(HPeHt).trace();
    if (!(denom > 0.0) || !std::isfinite(denom)) {
        std::fprintf(stderr, "inflation skipped: zero ensemble spread at observed days\n");
        return 1.0;
    }
    const double num = d.dot(ldlt.solve(d)) - double(k);
    return std::max(1.0, num / denom);
}

// Scale member anomalies by sqrt(lambda); the ensemble mean is preserved and
// the sample covariance scales by lambda.
inline EnsembleMatrix inflate(const EnsembleMatrix& ens, double lambda) {
    require(lambda >= 1.0 && std::isfinite(lambda), "inflation factor must be >= 1");
    if (lambda == 1.0) return ens;
    const Eigen::VectorXd mean = ens.mean_trajectory();
    Eigen::MatrixXd inflated = std::sqrt(lambda) * ens.anomalies();
    inflated.colwise() += mean;
    return EnsembleMatrix(std::move(inflated));
}

// ---------------------------------------------------------------------------
// Combined update

struct EnkfDiagnostics {
    int n_obs = 0;              // k
    double lambda = 1.0;        // inflation factor applied
    double gain_norm = 0.0;     // Frobenius norm of K
    double innovation_rms = 0.0;
};

struct EnkfUpdateResult {
    EnsembleMatrix analysis;
    EnkfDiagnostics diagnostics;
};

// Perturbed-observation update A^E = A^inf + K (V_sel - H A^inf), applied per
// member with each member's own observation column. With no valid
// observations the ensemble passes through unchanged (inflation is skipped).
inline EnkfUpdateResult enkf_update(const EnsembleMatrix& ens, const Eigen::MatrixXd& obs_matrix,
                                    const ObsNoiseModel& noise, const LocalizationSpec& loc,
                                    const InflationState& inflation) {
    require(int(obs_matrix.rows()) == ens.state_dim(),
            "observation matrix and ensemble must cover the same days");
    require(int(obs_matrix.cols()) == ens.members(),
            "observation matrix must have one column per member");

    const ObservationOperator H = build_observation_operator(obs_matrix);
    const int k = H.n_obs();
    EnkfUpdateResult out;
    out.diagnostics.n_obs = k;
    if (k == 0) {
        out.analysis = ens;
        return out;
    }

    const Eigen::MatrixXd V_sel = H.apply(obs_matrix);  // k x M, sentinel-free
    const Eigen::MatrixXd Re = noise.materialize(k);
    const int last_day = ens.state_dim() - 1;

    Eigen::MatrixXd Pe = forecast_covariance(ens);
    const Eigen::VectorXd d = V_sel.rowwise().mean() - H.apply(ens.mean_trajectory());
    out.diagnostics.innovation_rms = std::sqrt(d.squaredNorm() / double(k));

    double lambda = 1.0;
    if (inflation.enabled) lambda = inflation_factor(d, Re, H, Pe);
    out.diagnostics.lambda = lambda;

    const EnsembleMatrix inflated = inflate(ens, lambda);
    if (lambda != 1.0) Pe *= lambda;  // anomaly scaling by sqrt(lambda) exactly scales Pe

    const Eigen::MatrixXd K = kalman_gain(Pe, H, Re, loc, last_day);
    out.diagnostics.gain_norm = K.norm();

    Eigen::MatrixXd analysis =
        inflated.matrix() + K * (V_sel - H.apply(inflated.matrix()));
    if (!analysis.allFinite())
        throw NumericalError(last_day, "non-finite analysis ensemble");
    out.analysis = EnsembleMatrix(std::move(analysis));
    return out;
}

// Per-day ensemble mean of the assimilated matrix; this is the series handed
// back to the forecast model and reported to the user.
inline std::vector<double> assimilated_trajectory(const EnsembleMatrix& assimilated) {
    const Eigen::VectorXd mean = assimilated.mean_trajectory();
    return std::vector<double>(mean.data(), mean.data() + mean.size());
}

}  // namespace cropda
