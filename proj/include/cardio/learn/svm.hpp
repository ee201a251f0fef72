#pragma once

// One-vs-rest soft-margin SVMs solved with SMO (second-order working-set
// selection), each followed by a Platt sigmoid fitted to its training
// decision values. Class probabilities are the normalized sigmoids.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cardio/error.hpp"
#include "cardio/learn/data.hpp"
#include "cardio/parallel.hpp"
#include "json.hpp"

namespace cardio::learn {

enum class Kernel { Linear, Rbf };

constexpr const char* to_string(Kernel k) { return k == Kernel::Linear ? "linear" : "rbf"; }

inline Kernel kernel_from_string(const std::string& s) {
    if (s == "linear") return Kernel::Linear;
    if (s == "rbf") return Kernel::Rbf;
    fail(Errc::InvalidArgument, "unknown kernel '" + s + "'");
}

struct SvmParams {
    Kernel kernel = Kernel::Rbf;
    double c = 1.0;
    double gamma = 0.0;  // RBF width, 0 = 1 / features
    double tolerance = 1e-3;
    std::size_t max_iterations = 1'000'000;

    bool operator==(const SvmParams&) const = default;
};

struct PlattSigmoid {
    double a = 0.0;
    double b = 0.0;

    /// P(positive | f) = 1 / (1 + exp(a f + b)), kept strictly inside (0, 1).
    [[nodiscard]] double operator()(double f) const {
        const double z = a * f + b;
        const double p = z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
        return std::clamp(p, 1e-15, 1.0 - 1e-15);
    }

    bool operator==(const PlattSigmoid&) const = default;
};

struct BinarySvm {
    std::vector<std::vector<double>> support;  // support vectors
    std::vector<double> coef;                  // alpha_i * y_i per support vector
    std::vector<double> weights;               // explicit w, linear kernel only
    double bias = 0.0;                         // f(x) = sum coef_i K(sv_i, x) + bias
    std::size_t iterations = 0;
    PlattSigmoid platt;

    bool operator==(const BinarySvm&) const = default;
};

struct SvmModel {
    SvmParams params;  // gamma resolved
    std::size_t features = 0;
    std::vector<BinarySvm> machines;  // one per class

    bool operator==(const SvmModel&) const = default;
};

namespace detail {

inline double kernel_value(Kernel k, double gamma, std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    if (k == Kernel::Linear) {
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    }
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-gamma * s);
}

struct SmoResult {
    std::vector<double> alpha;
    double bias = 0.0;
    std::size_t iterations = 0;
};

// Dual: min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0, with Q_ij = y_i y_j K_ij.
inline SmoResult solve_smo(const std::vector<double>& kmat, const std::vector<double>& y, const SvmParams& p,
                           const std::string& who) {
    const std::size_t n = y.size();
    constexpr double tau = 1e-12;
    const double c = p.c;
    auto q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * kmat[i * n + j]; };
    std::vector<double> a(n, 0.0), g(n, -1.0);
    auto upper = [&](std::size_t t) { return a[t] >= c; };
    auto lower = [&](std::size_t t) { return a[t] <= 0.0; };

    std::size_t iter = 0;
    double gap = std::numeric_limits<double>::infinity();
    for (;; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t) {
            const bool in_up = y[t] > 0 ? !upper(t) : !lower(t);
            if (in_up && -y[t] * g[t] > gmax) {
                gmax = -y[t] * g[t];
                i = t;
            }
        }
        double gmax2 = -std::numeric_limits<double>::infinity();
        std::size_t j = n;
        double best_obj = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n && i < n; ++t) {
            const bool in_low = y[t] > 0 ? !lower(t) : !upper(t);
            if (!in_low) continue;
            const double yg = y[t] * g[t];
            gmax2 = std::max(gmax2, yg);
            const double diff = gmax + yg;
            if (diff > 0.0) {
                double quad = kmat[i * n + i] + kmat[t * n + t] - 2.0 * kmat[i * n + t];
                if (quad <= 0.0) quad = tau;
                const double obj = -(diff * diff) / quad;
                if (obj < best_obj) {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        gap = gmax + gmax2;
        if (i == n || j == n || gap < p.tolerance) break;
        if (iter >= p.max_iterations) {
            std::ostringstream msg;
            msg << who << ": SMO did not converge after " << iter << " iterations (KKT gap " << gap
                << ", tolerance " << p.tolerance << ")";
            fail(Errc::Convergence, msg.str());
        }

        const double ai = a[i], aj = a[j];
        if (y[i] != y[j]) {
            double quad = kmat[i * n + i] + kmat[j * n + j] - 2.0 * kmat[i * n + j];
            if (quad <= 0.0) quad = tau;
            const double delta = (-g[i] - g[j]) / quad;
            const double diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if (diff > 0.0) {
                if (a[j] < 0.0) {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if (diff > 0.0) {
                if (a[i] > c) {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if (a[j] > c) {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            double quad = kmat[i * n + i] + kmat[j * n + j] - 2.0 * kmat[i * n + j];
            if (quad <= 0.0) quad = tau;
            const double delta = (g[i] - g[j]) / quad;
            const double sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if (sum > c) {
                if (a[i] > c) {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if (a[j] < 0.0) {
                a[j] = 0.0;
                a[i] = sum;
            }
            if (sum > c) {
                if (a[j] > c) {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        const double di = a[i] - ai, dj = a[j] - aj;
        for (std::size_t t = 0; t < n; ++t) g[t] += q(i, t) * di + q(j, t) * dj;
    }

    // Bias from free vectors, or the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    std::size_t free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * g[t];
        if (upper(t)) {
            if (y[t] < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (lower(t)) {
            if (y[t] > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++free;
            sum_free += yg;
        }
    }
    const double rho = free > 0 ? sum_free / static_cast<double>(free) : (ub + lb) / 2.0;
    return {std::move(a), -rho, iter};
}

/// Regularized maximum-likelihood sigmoid fit (Newton with backtracking).
inline PlattSigmoid fit_platt(const std::vector<double>& dec, const std::vector<double>& y) {
    double prior1 = 0, prior0 = 0;
    for (double v : y) (v > 0 ? prior1 : prior0) += 1.0;
    const double hi = (prior1 + 1.0) / (prior1 + 2.0), lo = 1.0 / (prior0 + 2.0);
    const std::size_t n = dec.size();
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = y[i] > 0 ? hi : lo;

    auto objective = [&](double a, double b) {
        double f = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = dec[i] * a + b;
            f += z >= 0.0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
        }
        return f;
    };
    double a = 0.0, b = std::log((prior0 + 1.0) / (prior1 + 1.0));
    double fval = objective(a, b);
    for (int iter = 0; iter < 100; ++iter) {
        double h11 = 1e-12, h22 = 1e-12, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = dec[i] * a + b;
            double p, q;
            if (z >= 0.0) {
                p = std::exp(-z) / (1.0 + std::exp(-z));
                q = 1.0 / (1.0 + std::exp(-z));
            } else {
                p = 1.0 / (1.0 + std::exp(z));
                q = std::exp(z) / (1.0 + std::exp(z));
            }
            const double d2 = p * q;
            h11 += dec[i] * dec[i] * d2;
            h22 += d2;
            h21 += dec[i] * d2;
            const double d1 = t[i] - p;
            g1 += dec[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;
        double step = 1.0;
        while (step >= 1e-10) {
            const double na = a + step * da, nb = b + step * db;
            const double nf = objective(na, nb);
            if (nf < fval + 1e-4 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if (step < 1e-10) break;
    }
    return {a, b};
}

}  // namespace detail

inline double decision_value(const SvmModel& m, const BinarySvm& s, std::span<const double> x) {
    double f = s.bias;
    if (m.params.kernel == Kernel::Linear) {
        for (std::size_t k = 0; k < x.size(); ++k) f += s.weights[k] * x[k];
        return f;
    }
    for (std::size_t i = 0; i < s.support.size(); ++i)
        f += s.coef[i] * detail::kernel_value(m.params.kernel, m.params.gamma, s.support[i], x);
    return f;
}

/// One-vs-rest training. Every class in [0, classes) must occur in `y`.
inline SvmModel train_svm_ovr(const Matrix& x, const std::vector<int>& y, std::size_t classes, SvmParams params,
                              std::size_t workers = 1) {
    detail::check_training_set(x, y, classes, "svm");
    for (std::size_t k = 0; k < classes; ++k)
        require(std::find(y.begin(), y.end(), static_cast<int>(k)) != y.end(), Errc::DegenerateTraining,
                "svm: class " + std::to_string(k) + " has no training samples");
    require(params.c > 0.0 && params.tolerance > 0.0 && params.gamma >= 0.0, Errc::InvalidArgument,
            "svm: C and tolerance must be positive, gamma non-negative");
    if (params.gamma == 0.0) params.gamma = 1.0 / static_cast<double>(x.cols);

    const std::size_t n = x.rows;
    std::vector<double> kmat(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j)
            kmat[i * n + j] = kmat[j * n + i] = detail::kernel_value(params.kernel, params.gamma, x.row(i), x.row(j));

    SvmModel m;
    m.params = params;
    m.features = x.cols;
    m.machines.resize(classes);
    parallel_for(classes, workers, [&](std::size_t k) {
        std::vector<double> yk(n);
        for (std::size_t i = 0; i < n; ++i) yk[i] = y[i] == static_cast<int>(k) ? 1.0 : -1.0;
        const auto r = detail::solve_smo(kmat, yk, params, "svm class " + std::to_string(k));
        BinarySvm s;
        s.bias = r.bias;
        s.iterations = r.iterations;
        for (std::size_t i = 0; i < n; ++i) {
            if (r.alpha[i] <= 0.0) continue;
            s.support.emplace_back(x.row(i).begin(), x.row(i).end());
            s.coef.push_back(r.alpha[i] * yk[i]);
        }
        if (params.kernel == Kernel::Linear) {
            s.weights.assign(x.cols, 0.0);
            for (std::size_t i = 0; i < s.support.size(); ++i)
                for (std::size_t f = 0; f < x.cols; ++f) s.weights[f] += s.coef[i] * s.support[i][f];
        }
        std::vector<double> dec(n);
        for (std::size_t i = 0; i < n; ++i) {
            double f = s.bias;
            for (std::size_t t = 0; t < n; ++t) f += r.alpha[t] * yk[t] * kmat[t * n + i];
            dec[i] = f;
        }
        s.platt = detail::fit_platt(dec, yk);
        m.machines[k] = std::move(s);
    });
    return m;
}

/// Raw one-vs-rest decision values, one column per class.
inline std::vector<std::vector<double>> svm_decision_values(const SvmModel& m, const Matrix& x) {
    detail::check_width(x, m.features, "svm");
    std::vector<std::vector<double>> out(x.rows, std::vector<double>(m.machines.size()));
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t k = 0; k < m.machines.size(); ++k) out[i][k] = decision_value(m, m.machines[k], x.row(i));
    return out;
}

inline ProbRows svm_predict_proba(const SvmModel& m, const Matrix& x) {
    auto out = svm_decision_values(m, x);
    for (auto& row : out) {
        double s = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) s += (row[k] = m.machines[k].platt(row[k]));
        for (auto& v : row) v /= s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const SvmModel& m) {
    nlohmann::ordered_json j;
    j["kernel"] = to_string(m.params.kernel);
    j["c"] = m.params.c;
    j["gamma"] = m.params.gamma;
    j["tolerance"] = m.params.tolerance;
    j["max_iterations"] = m.params.max_iterations;
    j["features"] = m.features;
    auto& ms = j["machines"] = nlohmann::ordered_json::array();
    for (const auto& s : m.machines) {
        nlohmann::ordered_json o;
        o["bias"] = s.bias;
        o["platt_a"] = s.platt.a;
        o["platt_b"] = s.platt.b;
        o["iterations"] = s.iterations;
        o["weights"] = s.weights;
        o["coef"] = s.coef;
        o["support"] = s.support;
        ms.push_back(std::move(o));
    }
    return j;
}

inline SvmModel svm_from_json(const nlohmann::ordered_json& j) {
    SvmModel m;
    m.params.kernel = kernel_from_string(j.at("kernel").get<std::string>());
    m.params.c = j.at("c").get<double>();
    m.params.gamma = j.at("gamma").get<double>();
    m.params.tolerance = j.at("tolerance").get<double>();
    m.params.max_iterations = j.at("max_iterations").get<std::size_t>();
    m.features = j.at("features").get<std::size_t>();
    for (const auto& o : j.at("machines")) {
        BinarySvm s;
        s.bias = o.at("bias").get<double>();
        s.platt = {o.at("platt_a").get<double>(), o.at("platt_b").get<double>()};
        s.iterations = o.at("iterations").get<std::size_t>();
        o.at("weights").get_to(s.weights);
        o.at("coef").get_to(s.coef);
        o.at("support").get_to(s.support);
        require(s.coef.size() == s.support.size(), Errc::Integrity, "svm: coefficient count mismatch");
        for (const auto& sv : s.support) require(sv.size() == m.features, Errc::Integrity, "svm: support vector width");
        if (m.params.kernel == Kernel::Linear)
            require(s.weights.size() == m.features, Errc::Integrity, "svm: weight vector width");
        m.machines.push_back(std::move(s));
    }
    return m;
}

}  // namespace cardio::learn
