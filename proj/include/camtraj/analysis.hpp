#pragma once

#include <cmath>
#include <vector>

#include "camtraj/haar.hpp"
#include "camtraj/mat.hpp"
#include "camtraj/trajectory.hpp"

namespace camtraj {

struct Kinematics {
    std::vector<double> angular_speed;  // rad/s, length T-1
    std::vector<double> linear_speed;   // units/s, length T-1
};

inline Kinematics kinematics(const Trajectory& traj) {
    Kinematics k;
    const double dt = traj.frame_interval();
    for (int t = 0; t + 1 < traj.length(); ++t) {
        const Pose& a = traj.pose(t);
        const Pose& b = traj.pose(t + 1);
        const Rot3 rel = rot_mul(rot_transpose(a.rotation), b.rotation);
        k.angular_speed.push_back(rot_angle(rel) / dt);
        const Vec3 d = {b.translation[0] - a.translation[0], b.translation[1] - a.translation[1],
                        b.translation[2] - a.translation[2]};
        k.linear_speed.push_back(norm(d) / dt);
    }
    return k;
}

// Discrete analog of the kinematic energy integral: sum of (v^2 + w^2) * dt
// as a left Riemann sum over the step speeds.
inline double motion_energy(const Trajectory& traj) {
    const Kinematics k = kinematics(traj);
    double e = 0.0;
    for (size_t i = 0; i < k.linear_speed.size(); ++i)
        e += (k.linear_speed[i] * k.linear_speed[i] + k.angular_speed[i] * k.angular_speed[i]) *
             traj.frame_interval();
    return e;
}

// Spectral energy above cutoff_fraction of the Nyquist bin, Parseval-scaled
// so band energies are on the same scale as |x|^2. The per-channel mean is
// removed first: DC never counts and a constant signal scores exactly zero.
inline double hf_energy(const Mat& x, double cutoff_fraction) {
    const int length = x.rows();
    if (length < 2) throw std::invalid_argument("hf_energy: need at least 2 samples");
    const int nyquist = length / 2;
    const double two_pi = 6.283185307179586476925286766559;
    std::vector<double> means(static_cast<size_t>(x.cols()), 0.0);
    for (int c = 0; c < x.cols(); ++c) {
        for (int t = 0; t < length; ++t) means[static_cast<size_t>(c)] += x(t, c);
        means[static_cast<size_t>(c)] /= length;
    }
    double total = 0.0;
    for (int k = 1; k <= nyquist; ++k) {
        if (!(static_cast<double>(k) > cutoff_fraction * nyquist)) continue;
        const double weight = (length % 2 == 0 && k == nyquist) ? 1.0 : 2.0;
        for (int c = 0; c < x.cols(); ++c) {
            double re = 0.0, im = 0.0;
            for (int t = 0; t < length; ++t) {
                const double a = two_pi * k * t / length;
                const double v = x(t, c) - means[static_cast<size_t>(c)];
                re += v * std::cos(a);
                im -= v * std::sin(a);
            }
            total += weight * (re * re + im * im) / length;
        }
    }
    return total;
}

struct AnalysisReport {
    std::vector<double> angular_speed;
    std::vector<double> linear_speed;
    double accel_energy = 0.0;   // squared second-difference sum of flat values
    double hf_energy = 0.0;      // Fourier energy above cutoff
    double lf_fraction = 0.0;    // approx band share of wavelet energy
    double lowpass_error = 0.0;  // RMS of x - lowpass_reconstruct(x)
    EnergySplit bands;
    double max_step = 0.0;  // largest geodesic step
};

inline AnalysisReport analyze(const Trajectory& traj, int levels = 3, double cutoff = 0.5) {
    AnalysisReport rep;
    const Kinematics k = kinematics(traj);
    rep.angular_speed = k.angular_speed;
    rep.linear_speed = k.linear_speed;

    const Mat flat = flatten(traj).values;
    for (int t = 0; t + 2 < flat.rows(); ++t)
        for (int c = 0; c < flat.cols(); ++c) {
            const double dd = flat(t + 2, c) - 2.0 * flat(t + 1, c) + flat(t, c);
            rep.accel_energy += dd * dd;
        }
    rep.hf_energy = hf_energy(flat, cutoff);

    const WaveletPyramid pyr = dwt_multi(flat, levels);
    rep.bands = energy_split(pyr);
    rep.lf_fraction = rep.bands.total > 0.0 ? rep.bands.approx_energy / rep.bands.total : 1.0;

    const Mat low = lowpass_reconstruct(pyr);
    double err2 = 0.0;
    for (int t = 0; t < flat.rows(); ++t)
        for (int c = 0; c < flat.cols(); ++c) {
            const double d = flat(t, c) - low(t, c);
            err2 += d * d;
        }
    rep.lowpass_error = std::sqrt(err2 / static_cast<double>(flat.size()));

    for (int t = 0; t + 1 < traj.length(); ++t)
        rep.max_step = std::max(rep.max_step, geodesic_step(traj.pose(t), traj.pose(t + 1)));
    return rep;
}

}  // namespace camtraj
