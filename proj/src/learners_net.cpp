#include <algorithm>
#include <cmath>
#include <numeric>

#include "models_detail.hpp"

namespace etax::learners {

namespace detail {

namespace {

struct Standardizer {
    std::vector<double> mean, std;

    static Standardizer fit(const Matrix& X) {
        Standardizer s;
        const std::size_t n = X.rows(), m = X.cols();
        s.mean.assign(m, 0.0);
        s.std.assign(m, 1.0);
        if (n == 0) return s;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) s.mean[c] += X(r, c);
        for (double& v : s.mean) v /= static_cast<double>(n);
        std::vector<double> var(m, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) {
                const double d = X(r, c) - s.mean[c];
                var[c] += d * d;
            }
        for (std::size_t c = 0; c < m; ++c) {
            const double sd = std::sqrt(var[c] / static_cast<double>(n));
            s.std[c] = sd > 1e-12 ? sd : 1.0;  // constant columns pass through centered
        }
        return s;
    }
};

// Forward pass; returns the scalar output. When `pre` is given, stores the
// pre-activation vector of every layer for backprop.
double forward(const std::vector<DenseLayer>& layers, std::span<const double> z,
               std::vector<std::vector<double>>* pre) {
    std::vector<double> cur(z.begin(), z.end());
    if (pre) pre->clear();
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const DenseLayer& L = layers[li];
        std::vector<double> next(static_cast<std::size_t>(L.out), 0.0);
        for (int o = 0; o < L.out; ++o) {
            const double* wr = L.w.data() + static_cast<std::size_t>(o) * L.in;
            double s = L.b[static_cast<std::size_t>(o)];
            for (int i = 0; i < L.in; ++i) s += wr[i] * cur[static_cast<std::size_t>(i)];
            next[static_cast<std::size_t>(o)] = s;
        }
        if (pre) pre->push_back(next);
        if (li + 1 < layers.size())
            for (double& v : next) v = v > 0.0 ? v : 0.0;  // ReLU on hidden layers
        cur = std::move(next);
    }
    return cur[0];
}

struct Gradients {
    std::vector<DenseLayer> g;  // same shapes as the layers

    explicit Gradients(const std::vector<DenseLayer>& layers) {
        g = layers;
        for (auto& L : g) {
            std::fill(L.w.begin(), L.w.end(), 0.0);
            std::fill(L.b.begin(), L.b.end(), 0.0);
        }
    }
};

// Accumulate gradient of 0.5 * (out - target)^2 / scale for one sample.
void backward_sample(const std::vector<DenseLayer>& layers, std::span<const double> z,
                     double target, double scale, Gradients& grads, double& loss_acc) {
    std::vector<std::vector<double>> pre;
    const double out = forward(layers, z, &pre);
    const double r = out - target;
    loss_acc += 0.5 * r * r / scale;

    std::vector<double> delta = {r / scale};
    for (std::size_t li = layers.size(); li-- > 0;) {
        const DenseLayer& L = layers[li];
        DenseLayer& G = grads.g[li];
        // activation of the previous layer (input for li == 0)
        std::vector<double> act_prev;
        if (li == 0) {
            act_prev.assign(z.begin(), z.end());
        } else {
            act_prev = pre[li - 1];
            for (double& v : act_prev) v = v > 0.0 ? v : 0.0;
        }
        for (int o = 0; o < L.out; ++o) {
            const double d = delta[static_cast<std::size_t>(o)];
            G.b[static_cast<std::size_t>(o)] += d;
            double* gw = G.w.data() + static_cast<std::size_t>(o) * L.in;
            for (int i = 0; i < L.in; ++i) gw[i] += d * act_prev[static_cast<std::size_t>(i)];
        }
        if (li == 0) break;
        std::vector<double> delta_prev(static_cast<std::size_t>(L.in), 0.0);
        for (int o = 0; o < L.out; ++o) {
            const double d = delta[static_cast<std::size_t>(o)];
            const double* wr = L.w.data() + static_cast<std::size_t>(o) * L.in;
            for (int i = 0; i < L.in; ++i) delta_prev[static_cast<std::size_t>(i)] += d * wr[i];
        }
        const std::vector<double>& pre_prev = pre[li - 1];
        for (int i = 0; i < L.in; ++i)
            if (pre_prev[static_cast<std::size_t>(i)] <= 0.0)
                delta_prev[static_cast<std::size_t>(i)] = 0.0;
        delta = std::move(delta_prev);
    }
}

struct AdamState {
    std::vector<DenseLayer> m, v;
    long long t = 0;

    explicit AdamState(const std::vector<DenseLayer>& layers) {
        m = layers;
        v = layers;
        for (auto* s : {&m, &v})
            for (auto& L : *s) {
                std::fill(L.w.begin(), L.w.end(), 0.0);
                std::fill(L.b.begin(), L.b.end(), 0.0);
            }
    }

    void step(std::vector<DenseLayer>& layers, const Gradients& grads, double lr) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t li = 0; li < layers.size(); ++li) {
            auto update = [&](std::vector<double>& p, std::vector<double>& mm,
                              std::vector<double>& vv, const std::vector<double>& g) {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    mm[i] = b1 * mm[i] + (1.0 - b1) * g[i];
                    vv[i] = b2 * vv[i] + (1.0 - b2) * g[i] * g[i];
                    p[i] -= lr * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + eps);
                }
            };
            update(layers[li].w, m[li].w, v[li].w, grads.g[li].w);
            update(layers[li].b, m[li].b, v[li].b, grads.g[li].b);
        }
    }
};

Matrix standardize(const Matrix& X, const Standardizer& s) {
    Matrix Z(X.rows(), X.cols());
    for (std::size_t r = 0; r < X.rows(); ++r)
        for (std::size_t c = 0; c < X.cols(); ++c) Z(r, c) = (X(r, c) - s.mean[c]) / s.std[c];
    return Z;
}

}  // namespace

double NetModel::predict_masked_row(std::span<const double> masked) const {
    std::vector<double> z(masked.size());
    for (std::size_t i = 0; i < masked.size(); ++i) z[i] = (masked[i] - x_mean_[i]) / x_std_[i];
    return y_mean_ + y_std_ * forward(layers_, z, nullptr);
}

json NetModel::to_json() const {
    json j = header_json("net");
    json layers = json::array();
    for (const DenseLayer& L : layers_)
        layers.push_back({{"in", L.in}, {"out", L.out}, {"w", L.w}, {"b", L.b}});
    j["layers"] = layers;
    j["x_mean"] = x_mean_;
    j["x_std"] = x_std_;
    j["y_mean"] = y_mean_;
    j["y_std"] = y_std_;
    j["training"] = {{"epochs_run", info_.epochs_run},
                     {"best_epoch", info_.best_epoch},
                     {"best_validation_mae", info_.best_validation_mae},
                     {"validation_mae_per_epoch", info_.validation_mae_per_epoch}};
    return j;
}

std::unique_ptr<Regressor> NetModel::load(const json& j) {
    RegressorSpec spec = RegressorSpec::from_json(j.at("spec"));
    std::vector<DenseLayer> layers;
    for (const auto& lj : j.at("layers")) {
        DenseLayer L;
        L.in = lj.at("in").get<int>();
        L.out = lj.at("out").get<int>();
        L.w = lj.at("w").get<std::vector<double>>();
        L.b = lj.at("b").get<std::vector<double>>();
        if (L.w.size() != static_cast<std::size_t>(L.in) * static_cast<std::size_t>(L.out) ||
            L.b.size() != static_cast<std::size_t>(L.out))
            throw Error("net document has inconsistent layer shapes");
        layers.push_back(std::move(L));
    }
    NetTrainingInfo info;
    const json& t = j.at("training");
    info.epochs_run = t.at("epochs_run").get<int>();
    info.best_epoch = t.at("best_epoch").get<int>();
    info.best_validation_mae = t.at("best_validation_mae").get<double>();
    info.validation_mae_per_epoch = t.at("validation_mae_per_epoch").get<std::vector<double>>();
    return std::make_unique<NetModel>(
        std::move(spec), j.at("mask_cols").get<std::vector<int>>(),
        j.at("input_width").get<std::size_t>(), std::move(layers),
        j.at("x_mean").get<std::vector<double>>(), j.at("x_std").get<std::vector<double>>(),
        j.at("y_mean").get<double>(), j.at("y_std").get<double>(), std::move(info));
}

}  // namespace detail

using namespace detail;

std::unique_ptr<Regressor> fit_mlp(const Dataset& train, const Dataset& validation,
                                   const std::vector<std::string>& schema_names,
                                   const RegressorSpec& spec_in) {
    RegressorSpec spec = spec_in;
    const auto& cfg = std::get<NetConfig>(spec.params);
    for (int h : cfg.hidden)
        if (h < 1) throw ConfigError("net hidden layer sizes must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("net batch size must be >= 1");
    if (cfg.learning_rate <= 0.0) throw ConfigError("net learning rate must be positive");
    if (cfg.epochs < 1) throw ConfigError("net needs at least one epoch");

    const std::vector<int> mask_cols = resolve_mask(spec.mask, schema_names);
    const Matrix Xm = gather_columns(train.X, mask_cols);
    const Matrix Xv = gather_columns(validation.X, mask_cols);
    const std::size_t n = Xm.rows();
    if (n == 0) throw Error("net: empty training set");
    if (Xv.rows() == 0) throw Error("net: empty validation set for best-epoch selection");

    // Inputs and the target are standardized internally so callers always see
    // raw feature units and predictions in seconds.
    const Standardizer sx = Standardizer::fit(Xm);
    const Matrix Z = standardize(Xm, sx);
    const Matrix Zv = standardize(Xv, sx);
    const double y_mean = std::accumulate(train.y.begin(), train.y.end(), 0.0) /
                          static_cast<double>(n);
    double y_var = 0.0;
    for (double v : train.y) y_var += (v - y_mean) * (v - y_mean);
    const double y_std_raw = std::sqrt(y_var / static_cast<double>(n));
    const double y_std = y_std_raw > 1e-12 ? y_std_raw : 1.0;
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = (train.y[i] - y_mean) / y_std;

    // He-uniform initialization
    Rng rng(mix_seed(spec.seed, 0xad01));
    std::vector<DenseLayer> layers;
    int prev = static_cast<int>(Xm.cols());
    std::vector<int> sizes = cfg.hidden;
    sizes.push_back(1);
    for (int out : sizes) {
        DenseLayer L;
        L.in = prev;
        L.out = out;
        L.w.resize(static_cast<std::size_t>(prev) * static_cast<std::size_t>(out));
        L.b.assign(static_cast<std::size_t>(out), 0.0);
        const double limit = std::sqrt(6.0 / static_cast<double>(prev));
        for (double& w : L.w) w = rng.uniform(-limit, limit);
        layers.push_back(std::move(L));
        prev = out;
    }

    AdamState adam(layers);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    NetTrainingInfo info;
    std::vector<DenseLayer> best_layers = layers;
    double best_mae = std::numeric_limits<double>::infinity();

    auto validation_mae = [&]() {
        double mae = 0.0;
        for (std::size_t r = 0; r < Zv.rows(); ++r) {
            const double pred = y_mean + y_std * forward(layers, Zv.row(r), nullptr);
            mae += std::fabs(pred - validation.y[r]);
        }
        return mae / static_cast<double>(Zv.rows());
    };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            const auto batch = static_cast<double>(stop - start);
            Gradients grads(layers);
            double loss = 0.0;
            for (std::size_t i = start; i < stop; ++i) {
                const auto r = static_cast<std::size_t>(order[i]);
                backward_sample(layers, Z.row(r), t[r], batch, grads, loss);
            }
            if (!std::isfinite(loss))
                throw Error("net training diverged in epoch " + std::to_string(epoch) +
                            "; last finite epoch: " + std::to_string(epoch - 1));
            adam.step(layers, grads, cfg.learning_rate);
        }

        const double mae = validation_mae();
        info.validation_mae_per_epoch.push_back(mae);
        if (mae < best_mae) {
            best_mae = mae;
            best_layers = layers;
            info.best_epoch = epoch;
        }
    }
    info.epochs_run = cfg.epochs;
    info.best_validation_mae = best_mae;

    auto model = std::make_unique<NetModel>(std::move(spec), mask_cols, train.X.cols(),
                                            std::move(best_layers), sx.mean, sx.std, y_mean,
                                            y_std, std::move(info));
    model->bind_schema(schema_names);
    return model;
}

// ---------------------------------------------------------------------------
// diagnostic hooks
// ---------------------------------------------------------------------------

namespace {

NetModel& as_net(Regressor& model) {
    auto* net = dynamic_cast<NetModel*>(&model);
    if (!net) throw Error("not a net model");
    return *net;
}

const NetModel& as_net(const Regressor& model) {
    const auto* net = dynamic_cast<const NetModel*>(&model);
    if (!net) throw Error("not a net model");
    return *net;
}

}  // namespace

std::vector<double> net_parameters(const Regressor& model) {
    const NetModel& net = as_net(model);
    std::vector<double> out;
    for (const DenseLayer& L : net.layers()) {
        out.insert(out.end(), L.w.begin(), L.w.end());
        out.insert(out.end(), L.b.begin(), L.b.end());
    }
    return out;
}

void net_set_parameters(Regressor& model, std::span<const double> params) {
    NetModel& net = as_net(model);
    std::size_t at = 0;
    for (DenseLayer& L : net.layers()) {
        for (double& w : L.w) w = params[at++];
        for (double& b : L.b) b = params[at++];
    }
    if (at != params.size()) throw Error("net_set_parameters: size mismatch");
}

double net_loss_and_gradient(const Regressor& model, const Matrix& Xmask,
                             std::span<const double> y_seconds, std::vector<double>* grad_out) {
    const NetModel& net = as_net(model);
    if (Xmask.rows() != y_seconds.size()) throw Error("net_loss_and_gradient: shape mismatch");
    Standardizer s;
    s.mean.assign(net.x_mean().begin(), net.x_mean().end());
    s.std.assign(net.x_std().begin(), net.x_std().end());
    const Matrix Z = standardize(Xmask, s);

    Gradients grads(net.layers());
    double loss = 0.0;
    const auto scale = static_cast<double>(Z.rows());
    for (std::size_t r = 0; r < Z.rows(); ++r) {
        const double t = (y_seconds[r] - net.y_mean()) / net.y_std();
        backward_sample(net.layers(), Z.row(r), t, scale, grads, loss);
    }
    if (grad_out) {
        grad_out->clear();
        for (const DenseLayer& L : grads.g) {
            grad_out->insert(grad_out->end(), L.w.begin(), L.w.end());
            grad_out->insert(grad_out->end(), L.b.begin(), L.b.end());
        }
    }
    return loss;
}

}  // namespace etax::learners
