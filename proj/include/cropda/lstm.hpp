#pragma once

// Stacked LSTM trained to emulate the filter's assimilation map: hand-rolled
// forward pass, backpropagation through time, Adam training loop, and a
// versioned text weight format. Gate math is the standard formulation
//   z = W x_t + U h_{t-1} + b,   [i f g o] = [sig sig tanh sig](z)
//   c_t = f.c_{t-1} + i.g,       h_t = o.tanh(c_t)
// with zero initial hidden and cell states and a linear output head.

#include "cropda/core.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace cropda {

class TrainingError : public std::runtime_error {
public:
    TrainingError(int epoch, const std::string& what)
        : std::runtime_error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Four gates packed row-wise in the order [input, forget, candidate, output].
struct LstmLayerWeights {
    int input_dim = 0;
    int hidden_dim = 0;
    Eigen::MatrixXd W;  // 4H x D
    Eigen::MatrixXd U;  // 4H x H
    Eigen::VectorXd b;  // 4H

    enum Gate { kInput = 0, kForget = 1, kCandidate = 2, kOutput = 3 };

    auto gate_W(Gate g) { return W.middleRows(g * hidden_dim, hidden_dim); }
    auto gate_U(Gate g) { return U.middleRows(g * hidden_dim, hidden_dim); }
    auto gate_b(Gate g) { return b.segment(g * hidden_dim, hidden_dim); }
    auto gate_b(Gate g) const { return b.segment(g * hidden_dim, hidden_dim); }

    int param_count() const { return int(W.size() + U.size() + b.size()); }
};

struct LstmNetwork {
    std::vector<LstmLayerWeights> layers;
    Eigen::VectorXd head_w;  // hidden dim of last layer
    double head_b = 0.0;

    // Per-feature affine input transform x' = (x - offset) / scale, identity
    // until training installs standardization statistics.
    Eigen::VectorXd input_offset;
    Eigen::VectorXd input_scale;

    int input_dim() const { return layers.empty() ? 0 : layers.front().input_dim; }

    int param_count() const {
        int n = int(head_w.size()) + 1;
        for (const auto& l : layers) n += l.param_count();
        return n;
    }

    // Uniform +-1/sqrt(fan_in) init with the forget-gate bias at 1.
    static LstmNetwork init(int input_dim, const std::vector<int>& hidden_dims,
                            std::uint64_t seed) {
        require(input_dim >= 1, "LSTM needs input_dim >= 1");
        require(!hidden_dims.empty(), "LSTM needs at least one layer");
        Rng rng(seed);
        auto uniform_pm = [&](double bound) { return (2.0 * rng.uniform() - 1.0) * bound; };

        LstmNetwork net;
        int in = input_dim;
        for (int h : hidden_dims) {
            require(h >= 1, "hidden dim must be >= 1");
            LstmLayerWeights layer;
            layer.input_dim = in;
            layer.hidden_dim = h;
            const double bw = 1.0 / std::sqrt(double(in));
            const double bu = 1.0 / std::sqrt(double(h));
            layer.W.resize(4 * h, in);
            layer.U.resize(4 * h, h);
            layer.b = Eigen::VectorXd::Zero(4 * h);
            for (int r = 0; r < 4 * h; ++r)
                for (int c = 0; c < in; ++c) layer.W(r, c) = uniform_pm(bw);
            for (int r = 0; r < 4 * h; ++r)
                for (int c = 0; c < h; ++c) layer.U(r, c) = uniform_pm(bu);
            layer.gate_b(LstmLayerWeights::kForget).setOnes();
            net.layers.push_back(std::move(layer));
            in = h;
        }
        const double bh = 1.0 / std::sqrt(double(in));
        net.head_w.resize(in);
        for (int i = 0; i < in; ++i) net.head_w[i] = uniform_pm(bh);
        net.head_b = 0.0;
        net.input_offset = Eigen::VectorXd::Zero(input_dim);
        net.input_scale = Eigen::VectorXd::Ones(input_dim);
        return net;
    }
};

// Everything the backward pass needs, one column per time step.
struct LstmCache {
    struct Layer {
        Eigen::MatrixXd x;      // D x T (layer input)
        Eigen::MatrixXd i, f, g, o;
        Eigen::MatrixXd c, tanh_c, h;
    };
    std::vector<Layer> layers;
    std::vector<double> outputs;
};

struct LstmForwardResult {
    std::vector<double> outputs;
    LstmCache cache;
};

inline LstmForwardResult lstm_forward(const LstmNetwork& net,
                                      const std::vector<Eigen::VectorXd>& inputs) {
    require(!net.layers.empty(), "network has no layers");
    require(!inputs.empty(), "lstm_forward needs a nonempty sequence");
    const int T = int(inputs.size());
    const int D = net.input_dim();

    LstmForwardResult out;
    out.cache.layers.resize(net.layers.size());

    Eigen::MatrixXd x(D, T);
    for (int t = 0; t < T; ++t) {
        require(int(inputs[size_t(t)].size()) == D, "input dim mismatch");
        require(inputs[size_t(t)].allFinite(), "lstm_forward requires finite inputs");
        x.col(t) = (inputs[size_t(t)] - net.input_offset).cwiseQuotient(net.input_scale);
    }

    for (size_t li = 0; li < net.layers.size(); ++li) {
        const LstmLayerWeights& L = net.layers[li];
        const int H = L.hidden_dim;
        auto& cl = out.cache.layers[li];
        cl.x = x;
        cl.i.resize(H, T);
        cl.f.resize(H, T);
        cl.g.resize(H, T);
        cl.o.resize(H, T);
        cl.c.resize(H, T);
        cl.tanh_c.resize(H, T);
        cl.h.resize(H, T);

        Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(H);
        Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(H);
        for (int t = 0; t < T; ++t) {
            Eigen::VectorXd z = L.W * x.col(t) + L.U * h_prev + L.b;
            for (int j = 0; j < H; ++j) {
                cl.i(j, t) = sigmoid(z[0 * H + j]);
                cl.f(j, t) = sigmoid(z[1 * H + j]);
                cl.g(j, t) = std::tanh(z[2 * H + j]);
                cl.o(j, t) = sigmoid(z[3 * H + j]);
            }
            cl.c.col(t) = cl.f.col(t).cwiseProduct(c_prev) + cl.i.col(t).cwiseProduct(cl.g.col(t));
            cl.tanh_c.col(t) = cl.c.col(t).array().tanh();
            cl.h.col(t) = cl.o.col(t).cwiseProduct(cl.tanh_c.col(t));
            h_prev = cl.h.col(t);
            c_prev = cl.c.col(t);
        }
        x = cl.h;  // feeds the next layer
    }

    out.outputs.resize(size_t(T));
    const Eigen::MatrixXd& h_top = out.cache.layers.back().h;
    for (int t = 0; t < T; ++t)
        out.outputs[size_t(t)] = net.head_w.dot(h_top.col(t)) + net.head_b;
    out.cache.outputs = out.outputs;
    return out;
}

struct LstmGradients {
    struct Layer {
        Eigen::MatrixXd W, U;
        Eigen::VectorXd b;
    };
    std::vector<Layer> layers;
    Eigen::VectorXd head_w;
    double head_b = 0.0;

    static LstmGradients zeros_like(const LstmNetwork& net) {
        LstmGradients g;
        g.layers.resize(net.layers.size());
        for (size_t i = 0; i < net.layers.size(); ++i) {
            g.layers[i].W = Eigen::MatrixXd::Zero(net.layers[i].W.rows(), net.layers[i].W.cols());
            g.layers[i].U = Eigen::MatrixXd::Zero(net.layers[i].U.rows(), net.layers[i].U.cols());
            g.layers[i].b = Eigen::VectorXd::Zero(net.layers[i].b.size());
        }
        g.head_w = Eigen::VectorXd::Zero(net.head_w.size());
        g.head_b = 0.0;
        return g;
    }

    void add_scaled(const LstmGradients& other, double s) {
        for (size_t i = 0; i < layers.size(); ++i) {
            layers[i].W += s * other.layers[i].W;
            layers[i].U += s * other.layers[i].U;
            layers[i].b += s * other.layers[i].b;
        }
        head_w += s * other.head_w;
        head_b += s * other.head_b;
    }
};

// Mean squared error over the sequence.
inline double sequence_mse(const std::vector<double>& outputs, const std::vector<double>& targets) {
    require(outputs.size() == targets.size() && !outputs.empty(),
            "sequence_mse needs matching nonempty sequences");
    double acc = 0.0;
    for (size_t t = 0; t < outputs.size(); ++t) {
        const double r = outputs[t] - targets[t];
        acc += r * r;
    }
    return acc / double(outputs.size());
}

// Full BPTT gradients of the sequence MSE with respect to every weight.
inline LstmGradients lstm_backward(const LstmNetwork& net, const LstmCache& cache,
                                   const std::vector<double>& targets) {
    require(cache.outputs.size() == targets.size(), "targets must match the cached forward pass");
    const int T = int(targets.size());
    const int n_layers = int(net.layers.size());
    LstmGradients grads = LstmGradients::zeros_like(net);

    // Output head and the gradient flowing into the top layer's h sequence.
    const Eigen::MatrixXd& h_top = cache.layers.back().h;
    Eigen::MatrixXd dh_above = Eigen::MatrixXd::Zero(h_top.rows(), T);
    for (int t = 0; t < T; ++t) {
        const double dy = 2.0 * (cache.outputs[size_t(t)] - targets[size_t(t)]) / double(T);
        grads.head_w += dy * h_top.col(t);
        grads.head_b += dy;
        dh_above.col(t) = dy * net.head_w;
    }

    for (int li = n_layers - 1; li >= 0; --li) {
        const LstmLayerWeights& L = net.layers[size_t(li)];
        const auto& cl = cache.layers[size_t(li)];
        auto& gl = grads.layers[size_t(li)];
        const int H = L.hidden_dim;

        Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(L.input_dim, T);
        Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H);
        Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(H);
        Eigen::VectorXd dz(4 * H);

        for (int t = T - 1; t >= 0; --t) {
            const Eigen::VectorXd dh = dh_above.col(t) + dh_next;
            const Eigen::VectorXd dc =
                dc_next +
                dh.cwiseProduct(cl.o.col(t))
                    .cwiseProduct((1.0 - cl.tanh_c.col(t).array().square()).matrix());

            const Eigen::VectorXd c_prev =
                (t > 0) ? Eigen::VectorXd(cl.c.col(t - 1)) : Eigen::VectorXd::Zero(H);
            const Eigen::VectorXd h_prev =
                (t > 0) ? Eigen::VectorXd(cl.h.col(t - 1)) : Eigen::VectorXd::Zero(H);

            const auto i = cl.i.col(t).array();
            const auto f = cl.f.col(t).array();
            const auto g = cl.g.col(t).array();
            const auto o = cl.o.col(t).array();

            dz.segment(0 * H, H) = (dc.array() * g * i * (1.0 - i)).matrix();
            dz.segment(1 * H, H) = (dc.array() * c_prev.array() * f * (1.0 - f)).matrix();
            dz.segment(2 * H, H) = (dc.array() * i * (1.0 - g.square())).matrix();
            dz.segment(3 * H, H) = (dh.array() * cl.tanh_c.col(t).array() * o * (1.0 - o)).matrix();

            gl.W.noalias() += dz * cl.x.col(t).transpose();
            gl.U.noalias() += dz * h_prev.transpose();
            gl.b += dz;

            dx.col(t).noalias() = L.W.transpose() * dz;
            dh_next.noalias() = L.U.transpose() * dz;
            dc_next = dc.cwiseProduct(cl.f.col(t));
        }
        dh_above = dx;  // gradient w.r.t. the layer below's h sequence
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Parameter flattening (shared by the optimizer and the gradient checks)

namespace detail {

template <typename Net, typename Fn>
void for_each_param_block(Net& net, Fn&& fn) {
    for (auto& l : net.layers) {
        fn(l.W.data(), l.W.size());
        fn(l.U.data(), l.U.size());
        fn(l.b.data(), l.b.size());
    }
    fn(net.head_w.data(), net.head_w.size());
    fn(&net.head_b, 1);
}

}  // namespace detail

inline Eigen::VectorXd flatten_params(const LstmNetwork& net) {
    Eigen::VectorXd v(net.param_count());
    Eigen::Index at = 0;
    detail::for_each_param_block(net, [&](const double* p, Eigen::Index n) {
        v.segment(at, n) = Eigen::Map<const Eigen::VectorXd>(p, n);
        at += n;
    });
    return v;
}

inline void unflatten_params(LstmNetwork& net, const Eigen::VectorXd& v) {
    require(v.size() == net.param_count(), "parameter vector size mismatch");
    Eigen::Index at = 0;
    detail::for_each_param_block(net, [&](double* p, Eigen::Index n) {
        Eigen::Map<Eigen::VectorXd>(p, n) = v.segment(at, n);
        at += n;
    });
}

inline Eigen::VectorXd flatten_grads(const LstmGradients& g) {
    Eigen::Index total = g.head_w.size() + 1;
    for (const auto& l : g.layers) total += l.W.size() + l.U.size() + l.b.size();
    Eigen::VectorXd v(total);
    Eigen::Index at = 0;
    detail::for_each_param_block(g, [&](const double* p, Eigen::Index n) {
        v.segment(at, n) = Eigen::Map<const Eigen::VectorXd>(p, n);
        at += n;
    });
    return v;
}

// ---------------------------------------------------------------------------
// Training

struct TrainingSample {
    std::vector<Eigen::VectorXd> inputs;
    std::vector<double> targets;

    void validate() const {
        require(!inputs.empty(), "training sample must be nonempty");
        require(inputs.size() == targets.size(), "inputs and targets must have equal length");
        for (double t : targets)
            require(std::isfinite(t) && t != ObservationSeries::kSentinel,
                    "targets must be finite non-sentinel values");
    }
};

// Per-day emulator features: (ensemble-mean forecast, observation or -1,
// observed flag). The flag lets the network tell a missing day from a
// genuinely low LAI reading.
inline std::vector<Eigen::VectorXd> emulator_features(const std::vector<double>& forecast_means,
                                                      const ObservationSeries& obs) {
    require(int(forecast_means.size()) == obs.size(),
            "forecast means and observations must align");
    std::vector<Eigen::VectorXd> features(forecast_means.size());
    for (int t = 0; t < obs.size(); ++t) {
        Eigen::VectorXd f(3);
        f[0] = forecast_means[size_t(t)];
        f[1] = obs.has(t) ? obs.value(t) : ObservationSeries::kSentinel;
        f[2] = obs.has(t) ? 1.0 : 0.0;
        features[size_t(t)] = f;
    }
    return features;
}

// Fidelity-mode features: the full forecast ensemble row and the full
// perturbed-observation row per day (2M inputs per step).
inline std::vector<Eigen::VectorXd> emulator_features_ensemble(const EnsembleMatrix& forecast,
                                                               const Eigen::MatrixXd& obs_matrix) {
    require(int(obs_matrix.rows()) == forecast.state_dim(), "ensemble and V must cover same days");
    require(int(obs_matrix.cols()) == forecast.members(), "ensemble and V need equal M");
    const int M = forecast.members();
    std::vector<Eigen::VectorXd> features(static_cast<size_t>(forecast.state_dim()));
    for (int t = 0; t < forecast.state_dim(); ++t) {
        Eigen::VectorXd f(2 * M);
        f.head(M) = forecast.matrix().row(t).transpose();
        f.tail(M) = obs_matrix.row(t).transpose();
        features[size_t(t)] = f;
    }
    return features;
}

struct TrainConfig {
    std::vector<int> hidden = {64, 32, 16};
    int epochs = 300;
    double learning_rate = 1e-3;
    int batch_size = 10;
    double grad_clip = 5.0;
    double validation_fraction = 0.2;
    bool standardize_inputs = true;
    std::uint64_t seed = 42;

    void validate() const {
        require(epochs >= 1, "training needs epochs >= 1");
        require(learning_rate >= 0.0, "learning rate must be >= 0");
        require(batch_size >= 1, "batch size must be >= 1");
        require(validation_fraction >= 0.0 && validation_fraction < 1.0,
                "validation fraction must be in [0, 1)");
    }
};

struct EpochLoss {
    double train_mse = 0.0;
    double val_mse = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
    LstmNetwork net;
    std::vector<EpochLoss> loss_curve;
    double final_train_mse = 0.0;
};

inline double evaluate_mse(const LstmNetwork& net, const std::vector<TrainingSample>& samples,
                           const std::vector<size_t>& idx) {
    if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
    double acc = 0.0;
    for (size_t i : idx) {
        const auto fwd = lstm_forward(net, samples[i].inputs);
        acc += sequence_mse(fwd.outputs, samples[i].targets);
    }
    return acc / double(idx.size());
}

// Adam over the flattened parameter vector, gradient-norm clipping, seeded
// shuffling, fixed-order batch accumulation. Deterministic for a fixed seed.
inline TrainResult train_emulator(const std::vector<TrainingSample>& samples,
                                  const TrainConfig& cfg) {
    cfg.validate();
    require(!samples.empty(), "train_emulator needs at least one sample");
    const int input_dim = int(samples.front().inputs.front().size());
    for (const auto& s : samples) {
        s.validate();
        require(int(s.inputs.front().size()) == input_dim, "samples must share input dim");
    }

    // Split by sample (season) order: the tail fraction is held out.
    const size_t n_val = size_t(cfg.validation_fraction * double(samples.size()));
    std::vector<size_t> train_idx, val_idx;
    for (size_t i = 0; i + n_val < samples.size(); ++i) train_idx.push_back(i);
    for (size_t i = samples.size() - n_val; i < samples.size(); ++i) val_idx.push_back(i);

    TrainResult result;
    result.net = LstmNetwork::init(input_dim, cfg.hidden, cfg.seed);

    if (cfg.standardize_inputs) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(input_dim);
        Eigen::VectorXd sq = Eigen::VectorXd::Zero(input_dim);
        double n = 0.0;
        for (size_t i : train_idx)
            for (const auto& x : samples[i].inputs) {
                mean += x;
                sq += x.cwiseProduct(x);
                n += 1.0;
            }
        mean /= n;
        Eigen::VectorXd var = sq / n - mean.cwiseProduct(mean);
        result.net.input_offset = mean;
        result.net.input_scale =
            var.cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-8);
    }

    const int n_params = result.net.param_count();
    Eigen::VectorXd adam_m = Eigen::VectorXd::Zero(n_params);
    Eigen::VectorXd adam_v = Eigen::VectorXd::Zero(n_params);
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    long step = 0;

    Rng shuffle_rng = Rng::substream(cfg.seed, 0x51u);
    std::vector<size_t> order = train_idx;

    result.loss_curve.reserve(size_t(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the seeded stream.
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = size_t(shuffle_rng.uniform_int(0, int(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        size_t seen = 0;
        for (size_t begin = 0; begin < order.size(); begin += size_t(cfg.batch_size)) {
            const size_t end = std::min(order.size(), begin + size_t(cfg.batch_size));
            LstmGradients batch = LstmGradients::zeros_like(result.net);
            for (size_t bi = begin; bi < end; ++bi) {
                const TrainingSample& s = samples[order[bi]];
                const auto fwd = lstm_forward(result.net, s.inputs);
                epoch_loss += sequence_mse(fwd.outputs, s.targets);
                ++seen;
                batch.add_scaled(lstm_backward(result.net, fwd.cache, s.targets),
                                 1.0 / double(end - begin));
            }

            Eigen::VectorXd g = flatten_grads(batch);
            if (cfg.grad_clip > 0.0) {
                const double norm = g.norm();
                if (norm > cfg.grad_clip) g *= cfg.grad_clip / norm;
            }
            ++step;
            adam_m = beta1 * adam_m + (1.0 - beta1) * g;
            adam_v = beta2 * adam_v + (1.0 - beta2) * g.cwiseProduct(g);
            const double bc1 = 1.0 - std::pow(beta1, double(step));
            const double bc2 = 1.0 - std::pow(beta2, double(step));
            Eigen::VectorXd denom = (adam_v / bc2).cwiseSqrt();
            denom.array() += adam_eps;
            Eigen::VectorXd params = flatten_params(result.net);
            params -= (cfg.learning_rate / bc1) * adam_m.cwiseQuotient(denom);
            unflatten_params(result.net, params);
        }

        EpochLoss el;
        el.train_mse = epoch_loss / double(seen);
        if (!std::isfinite(el.train_mse))
            throw TrainingError(epoch, "training loss became non-finite");
        if (!val_idx.empty()) el.val_mse = evaluate_mse(result.net, samples, val_idx);
        result.loss_curve.push_back(el);
    }

    result.final_train_mse = evaluate_mse(result.net, samples, train_idx);
    return result;
}

// Assimilated estimate for every day, observed or not.
inline std::vector<double> emulate_assimilation(const LstmNetwork& net,
                                                const std::vector<double>& forecast_means,
                                                const ObservationSeries& obs) {
    require(net.input_dim() == 3,
            "emulate_assimilation expects a mean-mode network (input dim 3)");
    return lstm_forward(net, emulator_features(forecast_means, obs)).outputs;
}

// ---------------------------------------------------------------------------
// Weight file (versioned text; %.17g round-trips doubles exactly)

namespace detail {

inline void write_values(std::ostream& os, const double* p, Eigen::Index n) {
    char buf[40];
    for (Eigen::Index i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", p[i]);
        os << buf << (i + 1 == n ? "\n" : " ");
    }
}

inline void read_values(std::istream& is, double* p, Eigen::Index n, const std::string& what) {
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(is >> p[i])) throw std::runtime_error("weight file: truncated " + what);
}

// Matrices travel row-major in the file regardless of in-memory layout.
inline void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMajor rm = m;
    write_values(os, rm.data(), rm.size());
}

inline void read_matrix(std::istream& is, Eigen::MatrixXd& m, const std::string& what) {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor rm(m.rows(), m.cols());
    read_values(is, rm.data(), rm.size(), what);
    m = rm;
}

}  // namespace detail

inline void save_lstm(const LstmNetwork& net, std::ostream& os) {
    os << "cropda-lstm v1\n";
    os << "input_dim " << net.input_dim() << "\n";
    os << "layers " << net.layers.size() << "\n";
    os << "hidden";
    for (const auto& l : net.layers) os << " " << l.hidden_dim;
    os << "\n";
    os << "input_offset\n";
    detail::write_values(os, net.input_offset.data(), net.input_offset.size());
    os << "input_scale\n";
    detail::write_values(os, net.input_scale.data(), net.input_scale.size());
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        os << "layer " << i << "\n";
        os << "W\n";
        detail::write_matrix(os, l.W);
        os << "U\n";
        detail::write_matrix(os, l.U);
        os << "b\n";
        detail::write_values(os, l.b.data(), l.b.size());
    }
    os << "head\n";
    detail::write_values(os, net.head_w.data(), net.head_w.size());
    detail::write_values(os, &net.head_b, 1);
    os << "end\n";
}

inline void save_lstm_file(const LstmNetwork& net, const std::string& path) {
    std::ofstream os(path);
    require(bool(os), "cannot open weight file for writing: " + path);
    save_lstm(net, os);
    require(bool(os), "failed writing weight file: " + path);
}

inline LstmNetwork load_lstm(std::istream& is) {
    auto expect = [&](const std::string& token) {
        std::string got;
        if (!(is >> got) || got != token)
            throw std::runtime_error("weight file: expected '" + token + "', got '" + got + "'");
    };

    expect("cropda-lstm");
    expect("v1");
    expect("input_dim");
    int input_dim = 0;
    is >> input_dim;
    expect("layers");
    size_t n_layers = 0;
    is >> n_layers;
    require(input_dim >= 1 && n_layers >= 1, "weight file: bad dimensions");
    expect("hidden");
    std::vector<int> hidden(n_layers);
    for (auto& h : hidden) {
        is >> h;
        require(h >= 1, "weight file: bad hidden dim");
    }

    LstmNetwork net = LstmNetwork::init(input_dim, hidden, 0);
    expect("input_offset");
    detail::read_values(is, net.input_offset.data(), net.input_offset.size(), "input_offset");
    expect("input_scale");
    detail::read_values(is, net.input_scale.data(), net.input_scale.size(), "input_scale");
    for (size_t i = 0; i < n_layers; ++i) {
        expect("layer");
        size_t idx = 0;
        is >> idx;
        require(idx == i, "weight file: layer index out of order");
        auto& l = net.layers[i];
        expect("W");
        detail::read_matrix(is, l.W, "W");
        expect("U");
        detail::read_matrix(is, l.U, "U");
        expect("b");
        detail::read_values(is, l.b.data(), l.b.size(), "b");
    }
    expect("head");
    detail::read_values(is, net.head_w.data(), net.head_w.size(), "head");
    detail::read_values(is, &net.head_b, 1, "head bias");
    expect("end");
    return net;
}

inline LstmNetwork load_lstm_file(const std::string& path) {
    std::ifstream is(path);
    require(bool(is), "cannot open weight file: " + path);
    return load_lstm(is);
}

}  // namespace cropda
