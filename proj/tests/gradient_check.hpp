#pragma once

// Central finite-difference oracle for the network's backward pass. Shared by
// the unit tests and the acceptance suite.

#include <milpool/model.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace milpool::testing {

struct GradientCheck {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::string worst; // "matrix index / entry" of the worst entry
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is zero from dividing roundoff by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares backward() against (L(w+h) - L(w-h)) / 2h for every parameter.
/// Each evaluation replays the same dropout masks by copying `rng`.
inline GradientCheck check_gradients(const MilNetwork& net, const PoolingStrategy& strategy,
                                     const std::vector<Matrix>& bags, const Matrix& targets, const Rng& rng,
                                     double step = 1e-5) {
    std::vector<const Matrix*> batch;
    for (const auto& b : bags) batch.push_back(&b);

    auto loss_at = [&](const MilNetwork& n) {
        Rng r = rng;
        return loss(forward_batch(n, strategy, batch, r).F, targets);
    };

    Rng r = rng;
    const ForwardPass fp = forward_batch(net, strategy, batch, r);
    const NetworkParams analytic = backward(net, fp, targets);

    std::vector<const Matrix*> grads;
    analytic.for_each([&](const Matrix& m) { grads.push_back(&m); });

    GradientCheck out;
    MilNetwork probe = net;
    std::size_t which = 0;
    probe.params.for_each([&](Matrix& m) {
        const Matrix& g = *grads[which];
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double saved = m.values()[i];
            m.values()[i] = saved + step;
            const double up = loss_at(probe);
            m.values()[i] = saved - step;
            const double down = loss_at(probe);
            m.values()[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double err = relative_error(g.values()[i], numeric);
            ++out.checked;
            if (err > out.max_relative_error) {
                out.max_relative_error = err;
                out.worst = "matrix " + std::to_string(which) + " entry " + std::to_string(i) +
                            " analytic " + std::to_string(g.values()[i]) + " numeric " + std::to_string(numeric);
            }
        }
        ++which;
    });
    return out;
}

} // namespace milpool::testing
