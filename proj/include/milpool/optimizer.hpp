#pragma once

#include <milpool/error.hpp>
#include <milpool/matrix.hpp>
#include <milpool/network.hpp>

#include <cmath>
#include <span>
#include <vector>

namespace milpool {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are created on the first step
/// and bound to the parameter shapes seen then.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    long steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return cfg_; }

    void step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, double lr) {
        if (params.size() != grads.size())
            throw ShapeError("adam: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
        if (m_.empty()) {
            for (const Matrix* p : params) {
                m_.emplace_back(p->rows(), p->cols());
                v_.emplace_back(p->rows(), p->cols());
            }
        }
        if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed between steps");
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(m_[i]))
                throw ShapeError("adam: parameter " + std::to_string(i) + " is " + params[i]->shape() +
                                 " but gradient is " + grads[i]->shape());
        }

        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto p = params[i]->values();
            auto g = grads[i]->values();
            auto m = m_[i].values();
            auto v = v_[i].values();
            for (std::size_t j = 0; j < p.size(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                const double mhat = m[j] / c1;
                const double vhat = v[j] / c2;
                p[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
        }
    }

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

/// One Adam update of every network parameter.
inline void sgd_step(MilNetwork& net, const NetworkParams& grads, Adam& opt, double lr) {
    std::vector<Matrix*> p;
    std::vector<const Matrix*> g;
    net.params.for_each([&](Matrix& m) { p.push_back(&m); });
    grads.for_each([&](const Matrix& m) { g.push_back(&m); });
    opt.step(p, g, lr);
}

} // namespace milpool
