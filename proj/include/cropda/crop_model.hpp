#pragma once

// Daily LAI forecast model behind a pluggable interface, plus the
// parameter-perturbed ensemble forecast built on top of it.
//
// The forecast operator is a reduced-form surrogate: a temperature-sum-gated
// logistic LAI model with leaf-span senescence, driven by daily weather. It
// deliberately keeps the external shape of a full crop simulator (weather in,
// LAI trajectory out) so a heavier model can be slotted in behind the same
// interface.

#include "cropda/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cropda {

struct WeatherDay {
    double tmax = 0.0;   // degC
    double tmin = 0.0;   // degC
    double irrad = 0.0;  // J/m^2/day
    double vap = 0.0;    // hPa
    double wind = 0.0;   // m/sec
    double rain = 0.0;   // cm/day

    void validate() const {
        require(std::isfinite(tmax) && std::isfinite(tmin), "weather temperatures must be finite");
        require(tmax >= tmin, "weather requires tmax >= tmin");
        require(irrad >= 0.0 && rain >= 0.0 && wind >= 0.0,
                "weather requires irrad, rain, wind >= 0");
    }
};

struct CropParams {
    double tbase = 0.0;           // degC, lower growth threshold
    double tsum_emergence = 0.0;  // degC*day accumulated before emergence
    double rgrlai = 0.0;          // max relative LAI increase per effective degree-day
    double span = 0.0;            // leaf life span, days
    double lai_max = 0.0;         // logistic carrying capacity
    double lai_init = 0.0;        // LAI seeded on the emergence day

    void validate() const {
        require(rgrlai > 0.0, "crop params require rgrlai > 0");
        require(span > 0.0, "crop params require span > 0");
        require(tsum_emergence >= 0.0, "crop params require tsum_emergence >= 0");
        require(lai_init >= 0.0 && lai_max > lai_init,
                "crop params require lai_max > lai_init >= 0");
    }
};

// Developmental state carried between daily steps. The temperature sum gates
// emergence; the day counter gates senescence onset.
struct PhenologyState {
    double tsum = 0.0;
    int days_since_emergence = -1;  // -1 until the crop has emerged

    bool emerged() const { return days_since_emergence >= 0; }
};

struct StepResult {
    double lai = 0.0;
    PhenologyState phenology;
};

// One forward-Euler day of the surrogate.
//   Teff   = max(0, (tmax+tmin)/2 - tbase)
//   growth = rgrlai * Teff * lai * (1 - lai/lai_max)    after emergence
//   senescence = lai / span                              once leaf age > span
// Before emergence the LAI stays put and Teff accumulates into the
// temperature sum; on the crossing day the LAI is seeded at lai_init.
inline StepResult step_lai(double lai, const WeatherDay& weather, const CropParams& params,
                           const PhenologyState& phenology) {
    require(std::isfinite(lai) && lai >= 0.0, "step_lai requires finite lai >= 0");
    weather.validate();
    params.validate();

    const double teff = std::max(0.0, 0.5 * (weather.tmax + weather.tmin) - params.tbase);

    StepResult out;
    out.phenology = phenology;
    if (!phenology.emerged()) {
        out.phenology.tsum += teff;
        if (out.phenology.tsum >= params.tsum_emergence) {
            out.phenology.days_since_emergence = 0;
            out.lai = std::max(lai, params.lai_init);
        } else {
            out.lai = lai;
        }
        return out;
    }

    const double growth = params.rgrlai * teff * lai * (1.0 - lai / params.lai_max);
    const double senescence =
        (phenology.days_since_emergence > params.span) ? lai / params.span : 0.0;
    out.lai = std::max(0.0, lai + growth - senescence);
    out.phenology.tsum += teff;
    out.phenology.days_since_emergence = phenology.days_since_emergence + 1;
    return out;
}

// Full-season trajectory for one member. L(0) = 0; day t is stepped from day
// t-1 with weather[t-1]. When an assimilated prefix is supplied it replaces
// the model's own history verbatim, and the dynamics continue from its last
// value (clamped to >= 0 -- an analysis value may dip slightly below zero).
inline std::vector<double> forecast_member(
    const CropParams& params, const std::vector<WeatherDay>& weather, int up_to_day,
    const std::vector<double>* assimilated_prefix = nullptr) {
    require(up_to_day >= 0, "forecast_member requires up_to_day >= 0");
    require(int(weather.size()) >= up_to_day + 1,
            "weather has " + std::to_string(weather.size()) + " days, need " +
                std::to_string(up_to_day + 1));
    const int prefix_len = assimilated_prefix ? int(assimilated_prefix->size()) : 0;
    require(prefix_len <= up_to_day, "assimilated prefix must be shorter than the forecast");

    std::vector<double> traj(size_t(up_to_day) + 1, 0.0);
    double lai = 0.0;
    PhenologyState phen;
    if (prefix_len > 0) {
        traj[0] = (*assimilated_prefix)[0];
        lai = std::max(0.0, traj[0]);
    }
    for (int t = 1; t <= up_to_day; ++t) {
        StepResult s = step_lai(lai, weather[size_t(t - 1)], params, phen);
        phen = s.phenology;
        if (t < prefix_len) {
            traj[size_t(t)] = (*assimilated_prefix)[size_t(t)];
            lai = std::max(0.0, traj[size_t(t)]);
        } else {
            traj[size_t(t)] = s.lai;
            lai = s.lai;
        }
    }
    return traj;
}

// The ensemble's perturbed parameter sets: one relative offset per member,
// fixed for the whole season, applied to the perturbable subset
// (rgrlai, lai_max, tsum_emergence).
struct PerturbedParamSet {
    CropParams base;
    std::vector<double> member_offsets;

    int members() const { return int(member_offsets.size()); }

    CropParams member(int i) const {
        require(i >= 0 && i < members(), "member index out of range");
        const double f = std::max(0.05, 1.0 + member_offsets[size_t(i)]);
        CropParams p = base;
        p.rgrlai = base.rgrlai * f;
        p.lai_max = base.lai_max * f;
        p.tsum_emergence = base.tsum_emergence * f;
        return p;
    }

    static PerturbedParamSet draw(const CropParams& base, int M, double sigma,
                                  std::uint64_t seed) {
        base.validate();
        require(M >= 1, "PerturbedParamSet needs M >= 1");
        PerturbedParamSet set;
        set.base = base;
        NoiseVector nv = draw_noise_vector(seed, M, sigma);
        set.member_offsets.assign(nv.epsilons.data(), nv.epsilons.data() + M);
        return set;
    }
};

// M member trajectories through day up_to_day, gathered in member order.
inline EnsembleMatrix forecast_ensemble(const PerturbedParamSet& params,
                                        const std::vector<WeatherDay>& weather, int up_to_day,
                                        int threads = 1) {
    const int M = params.members();
    require(M >= 2, "forecast_ensemble needs M >= 2 members for a covariance");
    Eigen::MatrixXd A(up_to_day + 1, M);
    parallel_for(M, threads, [&](int m) {
        const std::vector<double> traj = forecast_member(params.member(m), weather, up_to_day);
        for (int t = 0; t <= up_to_day; ++t) A(t, m) = traj[size_t(t)];
    });
    return EnsembleMatrix(std::move(A));
}

}  // namespace cropda
