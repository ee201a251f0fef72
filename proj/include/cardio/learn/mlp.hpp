#pragma once

// Fully connected network: ReLU hidden layers, softmax output, mean
// cross-entropy loss, Adam updates. Parameters live in one flat vector so the
// gradient can be checked against finite differences directly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "cardio/error.hpp"
#include "cardio/learn/data.hpp"
#include "cardio/rng.hpp"
#include "json.hpp"

namespace cardio::learn {

struct MlpParams {
    std::vector<std::size_t> hidden{16};
    double learning_rate = 1e-2;
    std::size_t epochs = 500;
    std::size_t batch_size = 0;  // 0 = full batch
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    bool operator==(const MlpParams&) const = default;
};

struct MlpModel {
    std::vector<std::size_t> layers;  // input, hidden..., output
    // Per layer l: weights (layers[l+1] x layers[l], row-major) then biases (layers[l+1]).
    std::vector<double> params;
    MlpParams config;
    std::uint64_t seed = 0;
    double final_loss = 0.0;

    [[nodiscard]] std::size_t inputs() const { return layers.front(); }
    [[nodiscard]] std::size_t outputs() const { return layers.back(); }

    bool operator==(const MlpModel&) const = default;
};

inline std::size_t mlp_param_count(const std::vector<std::size_t>& layers) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) n += layers[l + 1] * layers[l] + layers[l + 1];
    return n;
}

inline constexpr double kHiddenBiasInit = 0.1;

/// He-initialized weights; hidden biases start slightly positive, output biases at zero.
inline MlpModel init_mlp(std::vector<std::size_t> layers, std::uint64_t seed) {
    require(layers.size() >= 2, Errc::InvalidArgument, "mlp needs at least an input and an output layer");
    for (auto s : layers) require(s > 0, Errc::InvalidArgument, "mlp layer sizes must be positive");
    MlpModel m;
    m.layers = std::move(layers);
    m.seed = seed;
    m.params.assign(mlp_param_count(m.layers), 0.0);
    Rng rng(seed);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) {
        const std::size_t in = m.layers[l], out = m.layers[l + 1];
        const double sd = std::sqrt(2.0 / static_cast<double>(in));
        for (std::size_t k = 0; k < in * out; ++k) m.params[off + k] = rng.normal(0.0, sd);
        if (l + 2 < m.layers.size())
            for (std::size_t k = 0; k < out; ++k) m.params[off + in * out + k] = kHiddenBiasInit;
        off += in * out + out;
    }
    return m;
}

namespace detail {

// Activations of every layer for one sample; the last entry holds the softmax.
inline std::vector<std::vector<double>> mlp_forward(const MlpModel& m, std::span<const double> x) {
    std::vector<std::vector<double>> act{{x.begin(), x.end()}};
    std::size_t off = 0;
    const std::size_t layers = m.layers.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = m.layers[l], out = m.layers[l + 1];
        const double* w = m.params.data() + off;
        const double* b = w + in * out;
        std::vector<double> z(out);
        for (std::size_t o = 0; o < out; ++o) {
            double s = b[o];
            for (std::size_t i = 0; i < in; ++i) s += w[o * in + i] * act[l][i];
            z[o] = s;
        }
        if (l + 1 < layers) {
            for (auto& v : z)
                if (v < 0.0) v = 0.0;  // NaN passes through
        } else {
            const double top = *std::max_element(z.begin(), z.end());
            double sum = 0.0;
            for (auto& v : z) sum += (v = std::exp(v - top));
            for (auto& v : z) v /= sum;
        }
        act.push_back(std::move(z));
        off += in * out + out;
    }
    return act;
}

}  // namespace detail

inline std::vector<double> mlp_predict_proba_row(const MlpModel& m, std::span<const double> x) {
    return detail::mlp_forward(m, x).back();
}

inline ProbRows mlp_predict_proba(const MlpModel& m, const Matrix& x) {
    detail::check_width(x, m.inputs(), "mlp");
    ProbRows out;
    for (std::size_t i = 0; i < x.rows; ++i) out.push_back(mlp_predict_proba_row(m, x.row(i)));
    return out;
}

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;  // same layout as MlpModel::params
};

/// Mean cross-entropy over the selected rows and its exact gradient by backpropagation.
inline LossAndGradient mlp_loss_and_gradient(const MlpModel& m, const Matrix& x, const std::vector<int>& y,
                                             std::span<const std::size_t> rows) {
    LossAndGradient r;
    r.gradient.assign(m.params.size(), 0.0);
    const std::size_t layers = m.layers.size() - 1;
    std::vector<std::size_t> offset(layers);
    for (std::size_t l = 0, off = 0; l < layers; ++l) {
        offset[l] = off;
        off += m.layers[l] * m.layers[l + 1] + m.layers[l + 1];
    }
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (auto row : rows) {
        const auto act = detail::mlp_forward(m, x.row(row));
        const auto label = static_cast<std::size_t>(y[row]);
        r.loss -= std::log(std::max(act.back()[label], 1e-300)) * inv_n;
        std::vector<double> delta = act.back();  // dL/dz at the softmax layer
        delta[label] -= 1.0;
        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = m.layers[l], out = m.layers[l + 1];
            double* gw = r.gradient.data() + offset[l];
            double* gb = gw + in * out;
            const double* w = m.params.data() + offset[l];
            for (std::size_t o = 0; o < out; ++o) {
                gb[o] += delta[o] * inv_n;
                for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += delta[o] * act[l][i] * inv_n;
            }
            if (l == 0) break;
            std::vector<double> prev(in, 0.0);
            for (std::size_t i = 0; i < in; ++i) {
                if (act[l][i] <= 0.0) continue;  // ReLU derivative
                double s = 0.0;
                for (std::size_t o = 0; o < out; ++o) s += w[o * in + i] * delta[o];
                prev[i] = s;
            }
            delta = std::move(prev);
        }
    }
    return r;
}

inline LossAndGradient mlp_loss_and_gradient(const MlpModel& m, const Matrix& x, const std::vector<int>& y) {
    std::vector<std::size_t> all(x.rows);
    std::iota(all.begin(), all.end(), 0);
    return mlp_loss_and_gradient(m, x, y, all);
}

inline MlpModel train_mlp(const Matrix& x, const std::vector<int>& y, std::size_t classes, const MlpParams& params,
                          std::uint64_t seed) {
    detail::check_training_set(x, y, classes, "mlp");
    require(!params.hidden.empty(), Errc::InvalidArgument, "mlp needs at least one hidden layer");
    require(params.learning_rate > 0.0 && params.epochs > 0, Errc::InvalidArgument,
            "mlp learning rate and epochs must be positive");
    std::vector<std::size_t> layers{x.cols};
    layers.insert(layers.end(), params.hidden.begin(), params.hidden.end());
    layers.push_back(classes);
    MlpModel m = init_mlp(layers, derive_seed(seed, 0));
    m.seed = seed;
    m.config = params;

    Rng order_rng(derive_seed(seed, 1));
    std::vector<std::size_t> order(x.rows);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = params.batch_size == 0 ? x.rows : std::min(params.batch_size, x.rows);
    std::vector<double> m1(m.params.size(), 0.0), m2(m.params.size(), 0.0);
    double b1t = 1.0, b2t = 1.0;
    for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
        if (batch < x.rows) order_rng.shuffle(order);
        for (std::size_t start = 0; start < x.rows; start += batch) {
            const std::span<const std::size_t> rows(order.data() + start, std::min(batch, x.rows - start));
            const auto lg = mlp_loss_and_gradient(m, x, y, rows);
            if (!std::isfinite(lg.loss))
                fail(Errc::TrainingDiverged, "mlp: loss became non-finite at epoch " + std::to_string(epoch));
            b1t *= params.beta1;
            b2t *= params.beta2;
            for (std::size_t k = 0; k < m.params.size(); ++k) {
                const double g = lg.gradient[k];
                m1[k] = params.beta1 * m1[k] + (1.0 - params.beta1) * g;
                m2[k] = params.beta2 * m2[k] + (1.0 - params.beta2) * g * g;
                const double mh = m1[k] / (1.0 - b1t), vh = m2[k] / (1.0 - b2t);
                m.params[k] -= params.learning_rate * mh / (std::sqrt(vh) + params.epsilon);
            }
        }
    }
    m.final_loss = mlp_loss_and_gradient(m, x, y).loss;
    if (!std::isfinite(m.final_loss)) fail(Errc::TrainingDiverged, "mlp: final loss is non-finite");
    for (double p : m.params)
        if (!std::isfinite(p)) fail(Errc::TrainingDiverged, "mlp: non-finite weight after training");
    return m;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const MlpModel& m) {
    nlohmann::ordered_json j;
    j["layers"] = m.layers;
    j["hidden"] = m.config.hidden;
    j["learning_rate"] = m.config.learning_rate;
    j["epochs"] = m.config.epochs;
    j["batch_size"] = m.config.batch_size;
    j["beta1"] = m.config.beta1;
    j["beta2"] = m.config.beta2;
    j["epsilon"] = m.config.epsilon;
    j["seed"] = m.seed;
    j["final_loss"] = m.final_loss;
    j["params"] = m.params;
    return j;
}

inline MlpModel mlp_from_json(const nlohmann::ordered_json& j) {
    MlpModel m;
    j.at("layers").get_to(m.layers);
    j.at("hidden").get_to(m.config.hidden);
    m.config.learning_rate = j.at("learning_rate").get<double>();
    m.config.epochs = j.at("epochs").get<std::size_t>();
    m.config.batch_size = j.at("batch_size").get<std::size_t>();
    m.config.beta1 = j.at("beta1").get<double>();
    m.config.beta2 = j.at("beta2").get<double>();
    m.config.epsilon = j.at("epsilon").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.final_loss = j.at("final_loss").get<double>();
    j.at("params").get_to(m.params);
    require(m.layers.size() >= 2 && m.params.size() == mlp_param_count(m.layers), Errc::Integrity,
            "mlp: parameter count does not match layer sizes");
    return m;
}

}  // namespace cardio::learn
