#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "camtraj/mat.hpp"

namespace camtraj {

struct StepOutOfRange : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Cumulative noise-retention schedule. alpha_bar[0] = 1 exactly; entries are
// strictly decreasing and stay inside (0, 1].
struct NoiseSchedule {
    int steps = 0;
    std::vector<double> alpha_bar;  // size steps + 1

    double at(int s) const {
        if (s < 0 || s > steps) throw StepOutOfRange("schedule index " + std::to_string(s));
        return alpha_bar[static_cast<size_t>(s)];
    }
};

inline NoiseSchedule cosine_schedule(int steps) {
    if (steps < 1) throw std::invalid_argument("cosine_schedule: steps must be >= 1");
    NoiseSchedule sched;
    sched.steps = steps;
    sched.alpha_bar.resize(static_cast<size_t>(steps) + 1);
    const double pi_half = 1.5707963267948966192313216916398;
    auto f = [&](double s) {
        const double a = ((s / steps) + 0.008) / 1.008 * pi_half;
        const double c = std::cos(a);
        return c * c;
    };
    const double f0 = f(0.0);
    sched.alpha_bar[0] = 1.0;
    for (int s = 1; s <= steps; ++s) {
        double ab = f(static_cast<double>(s)) / f0;
        ab = std::min(1.0 - 1e-5, std::max(1e-5, ab));
        // the clamp floor can flatten the tail; keep strict monotonicity
        const double prev = sched.alpha_bar[static_cast<size_t>(s - 1)];
        if (ab >= prev) ab = prev * (1.0 - 1e-9);
        sched.alpha_bar[static_cast<size_t>(s)] = ab;
    }
    return sched;
}

// Forward diffusion: sqrt(ab_s) * k0 + sqrt(1 - ab_s) * eps.
inline Mat forward_noise(const Mat& k0, int s, const Mat& eps, const NoiseSchedule& sched) {
    if (s < 1 || s > sched.steps)
        throw StepOutOfRange("forward_noise: step " + std::to_string(s) + " not in [1, " +
                             std::to_string(sched.steps) + "]");
    if (!k0.same_shape(eps)) throw std::invalid_argument("forward_noise: shape mismatch");
    const double ab = sched.at(s);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Mat out(k0.rows(), k0.cols());
    for (size_t i = 0; i < k0.size(); ++i) out.data()[i] = a * k0.data()[i] + b * eps.data()[i];
    return out;
}

}  // namespace camtraj
