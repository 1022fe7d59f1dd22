#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "camtraj/mat.hpp"
#include "camtraj/util.hpp"

namespace camtraj {

struct DegenerateRotation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Vec3 = std::array<double, 3>;
using Rot3 = std::array<double, 9>;  // row-major 3x3

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Rot3 rot_identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

inline Rot3 rot_mul(const Rot3& a, const Rot3& b) {
    Rot3 out{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
            out[i * 3 + j] = s;
        }
    return out;
}

inline Rot3 rot_transpose(const Rot3& r) {
    return {r[0], r[3], r[6], r[1], r[4], r[7], r[2], r[5], r[8]};
}

inline Vec3 rot_apply(const Rot3& r, const Vec3& v) {
    return {r[0] * v[0] + r[1] * v[1] + r[2] * v[2],
            r[3] * v[0] + r[4] * v[1] + r[5] * v[2],
            r[6] * v[0] + r[7] * v[1] + r[8] * v[2]};
}

// Rotations about the camera-local axes: +X right, +Y down, +Z viewing.
inline Rot3 rot_about_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {1, 0, 0, 0, c, -s, 0, s, c};
}
inline Rot3 rot_about_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {c, 0, s, 0, 1, 0, -s, 0, c};
}
inline Rot3 rot_about_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {c, -s, 0, s, c, 0, 0, 0, 1};
}

// Rotation angle of R in [0, pi].
inline double rot_angle(const Rot3& r) {
    const double tr = r[0] + r[4] + r[8];
    double c = (tr - 1.0) / 2.0;
    c = std::max(-1.0, std::min(1.0, c));
    return std::acos(c);
}

// Rotation vector (axis * angle) of R. Near-pi angles are handled through the
// symmetric part; adequate for net-motion classification, not for poses at
// exactly pi.
inline Vec3 rot_log(const Rot3& r) {
    const double angle = rot_angle(r);
    if (angle < 1e-12) return {0, 0, 0};
    const double s = 2.0 * std::sin(angle);
    if (std::abs(s) < 1e-12) {
        // angle ~ pi: axis from diagonal of (R + I)/2
        Vec3 axis = {std::sqrt(std::max(0.0, (r[0] + 1) / 2)),
                     std::sqrt(std::max(0.0, (r[4] + 1) / 2)),
                     std::sqrt(std::max(0.0, (r[8] + 1) / 2))};
        if (r[1] + r[3] < 0) axis[1] = -axis[1];
        if (r[2] + r[6] < 0) axis[2] = -axis[2];
        return {axis[0] * angle, axis[1] * angle, axis[2] * angle};
    }
    return {(r[7] - r[5]) / s * angle, (r[2] - r[6]) / s * angle, (r[3] - r[1]) / s * angle};
}

// World-to-camera rigid pose: x_cam = R * x_world + t.
struct Pose {
    Rot3 rotation = rot_identity();
    Vec3 translation = {0, 0, 0};

    static Pose identity() { return Pose{}; }

    bool rotation_valid(double tol = 1e-9) const {
        const Rot3& r = rotation;
        // rows orthonormal
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                double d = r[i * 3] * r[j * 3] + r[i * 3 + 1] * r[j * 3 + 1] + r[i * 3 + 2] * r[j * 3 + 2];
                double want = (i == j) ? 1.0 : 0.0;
                if (std::abs(d - want) > tol) return false;
            }
        // det +1
        double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                     r[2] * (r[3] * r[7] - r[4] * r[6]);
        return std::abs(det - 1.0) <= tol;
    }

    bool valid(double tol = 1e-9) const {
        if (!rotation_valid(tol)) return false;
        for (double t : translation)
            if (!std::isfinite(t)) return false;
        return true;
    }
};

inline Pose pose_mul(const Pose& a, const Pose& b) {
    // (a*b): x -> a.R*(b.R*x + b.t) + a.t
    Pose out;
    out.rotation = rot_mul(a.rotation, b.rotation);
    Vec3 rt = rot_apply(a.rotation, b.translation);
    out.translation = {rt[0] + a.translation[0], rt[1] + a.translation[1], rt[2] + a.translation[2]};
    return out;
}

inline Pose pose_inverse(const Pose& p) {
    Pose out;
    out.rotation = rot_transpose(p.rotation);
    Vec3 rt = rot_apply(out.rotation, p.translation);
    out.translation = {-rt[0], -rt[1], -rt[2]};
    return out;
}

// Camera center in world coordinates: C = -R^T t.
inline Vec3 camera_center(const Pose& p) {
    Vec3 c = rot_apply(rot_transpose(p.rotation), p.translation);
    return {-c[0], -c[1], -c[2]};
}

// Immutable time-indexed pose sequence. Length and frame interval are fixed
// at construction.
class Trajectory {
public:
    Trajectory(std::vector<Pose> poses, double frame_interval)
        : poses_(std::move(poses)), dt_(frame_interval) {
        if (poses_.size() < 2) throw std::invalid_argument("Trajectory: need at least 2 poses");
        if (!(dt_ > 0.0)) throw std::invalid_argument("Trajectory: frame_interval must be > 0");
        for (const Pose& p : poses_)
            if (!p.valid()) throw std::invalid_argument("Trajectory: invalid pose");
    }

    int length() const { return static_cast<int>(poses_.size()); }
    double frame_interval() const { return dt_; }
    const Pose& pose(int t) const { return poses_[static_cast<size_t>(t)]; }
    const std::vector<Pose>& poses() const { return poses_; }

private:
    std::vector<Pose> poses_;
    double dt_;
};

constexpr int kPoseChannels = 12;  // 3x4 [R|t], row-major

// T x 12 Euclidean view of a trajectory, the representation the denoiser
// works in.
struct FlatTrajectory {
    Mat values;  // T x 12

    FlatTrajectory() = default;
    explicit FlatTrajectory(Mat m) : values(std::move(m)) {
        if (values.cols() != kPoseChannels)
            throw std::invalid_argument("FlatTrajectory: expected 12 channels");
        if (!values.all_finite()) throw std::invalid_argument("FlatTrajectory: non-finite entries");
    }

    int length() const { return values.rows(); }
    int channels() const { return values.cols(); }
};

inline FlatTrajectory flatten(const Trajectory& traj) {
    Mat m(traj.length(), kPoseChannels);
    for (int t = 0; t < traj.length(); ++t) {
        const Pose& p = traj.pose(t);
        for (int i = 0; i < 3; ++i) {
            m(t, i * 4 + 0) = p.rotation[i * 3 + 0];
            m(t, i * 4 + 1) = p.rotation[i * 3 + 1];
            m(t, i * 4 + 2) = p.rotation[i * 3 + 2];
            m(t, i * 4 + 3) = p.translation[i];
        }
    }
    return FlatTrajectory(std::move(m));
}

// Nearest-rotation projection: Gram-Schmidt on the first two rows, third row
// from the cross product. Throws DegenerateRotation when a row collapses.
inline Rot3 project_rotation(const Rot3& raw) {
    Vec3 r0 = {raw[0], raw[1], raw[2]};
    Vec3 r1 = {raw[3], raw[4], raw[5]};
    const double n0 = norm(r0);
    if (n0 < 1e-8) throw DegenerateRotation("rotation row 0 has near-zero norm");
    for (double& x : r0) x /= n0;
    const double proj = dot(r1, r0);
    for (int i = 0; i < 3; ++i) r1[i] -= proj * r0[i];
    const double n1 = norm(r1);
    if (n1 < 1e-8) throw DegenerateRotation("rotation row 1 degenerate after orthogonalization");
    for (double& x : r1) x /= n1;
    const Vec3 r2 = cross(r0, r1);
    return {r0[0], r0[1], r0[2], r1[0], r1[1], r1[2], r2[0], r2[1], r2[2]};
}

inline Trajectory unflatten(const FlatTrajectory& flat, double frame_interval) {
    std::vector<Pose> poses;
    poses.reserve(static_cast<size_t>(flat.length()));
    for (int t = 0; t < flat.length(); ++t) {
        Rot3 raw;
        Vec3 tr;
        for (int i = 0; i < 3; ++i) {
            raw[i * 3 + 0] = flat.values(t, i * 4 + 0);
            raw[i * 3 + 1] = flat.values(t, i * 4 + 1);
            raw[i * 3 + 2] = flat.values(t, i * 4 + 2);
            tr[i] = flat.values(t, i * 4 + 3);
        }
        Pose p;
        p.rotation = project_rotation(raw);
        p.translation = tr;
        poses.push_back(p);
    }
    return Trajectory(std::move(poses), frame_interval);
}

// Weighted SE(3) step distance: w_rot * angle(Ra^T Rb) + |tb - ta|.
inline double geodesic_step(const Pose& a, const Pose& b, double w_rot = 1.0) {
    const Rot3 rel = rot_mul(rot_transpose(a.rotation), b.rotation);
    const double theta = rot_angle(rel);
    const Vec3 d = {b.translation[0] - a.translation[0], b.translation[1] - a.translation[1],
                    b.translation[2] - a.translation[2]};
    return w_rot * theta + norm(d);
}

struct LipschitzReport {
    double max_step = 0.0;
    int max_index = -1;  // index of the step (between pose i and i+1)
    bool pass = true;
};

inline LipschitzReport check_lipschitz(const Trajectory& traj, double bound, double w_rot = 1.0) {
    if (!(bound > 0.0)) throw std::invalid_argument("check_lipschitz: bound must be > 0");
    LipschitzReport rep;
    const double limit = bound * traj.frame_interval();
    for (int t = 0; t + 1 < traj.length(); ++t) {
        const double d = geodesic_step(traj.pose(t), traj.pose(t + 1), w_rot);
        if (d > rep.max_step) {
            rep.max_step = d;
            rep.max_index = t;
        }
    }
    rep.pass = rep.max_step <= limit;
    return rep;
}

enum class MotionVerdict { Static, TooFast, Ok };

inline const char* to_string(MotionVerdict v) {
    switch (v) {
        case MotionVerdict::Static: return "static";
        case MotionVerdict::TooFast: return "too_fast";
        default: return "ok";
    }
}

inline MotionVerdict validate_motion(const Trajectory& traj, double min_total, double max_step,
                                     double w_rot = 1.0) {
    if (min_total < 0.0) throw std::invalid_argument("validate_motion: min_total must be >= 0");
    if (!(max_step > 0.0)) throw std::invalid_argument("validate_motion: max_step must be > 0");
    double total = 0.0;
    double worst = 0.0;
    for (int t = 0; t + 1 < traj.length(); ++t) {
        const double d = geodesic_step(traj.pose(t), traj.pose(t + 1), w_rot);
        total += d;
        worst = std::max(worst, d);
    }
    if (total < min_total) return MotionVerdict::Static;
    if (worst > max_step) return MotionVerdict::TooFast;
    return MotionVerdict::Ok;
}

// --- pose-line text format -------------------------------------------------
// One line per step, 19 space-separated fields:
//   t_us fx fy cx cy k1 k2 r11 r12 r13 t1 r21 r22 r23 t2 r31 r32 r33 t3
// Normalized default intrinsics; the layout consumed by camera-control video
// generators.

struct PoseLineDefaults {
    double fx = 0.5, fy = 0.5, cx = 0.5, cy = 0.5, k1 = 0.0, k2 = 0.0;
};

inline std::string write_pose_lines(const Trajectory& traj, PoseLineDefaults intr = {}) {
    std::ostringstream out;
    for (int t = 0; t < traj.length(); ++t) {
        const long long t_us = std::llround(static_cast<double>(t) * traj.frame_interval() * 1e6);
        const Pose& p = traj.pose(t);
        out << t_us << ' ' << fmt_g17(intr.fx) << ' ' << fmt_g17(intr.fy) << ' ' << fmt_g17(intr.cx)
            << ' ' << fmt_g17(intr.cy) << ' ' << fmt_g17(intr.k1) << ' ' << fmt_g17(intr.k2);
        for (int i = 0; i < 3; ++i) {
            out << ' ' << fmt_g17(p.rotation[i * 3 + 0]) << ' ' << fmt_g17(p.rotation[i * 3 + 1])
                << ' ' << fmt_g17(p.rotation[i * 3 + 2]) << ' ' << fmt_g17(p.translation[i]);
        }
        out << '\n';
    }
    return out.str();
}

inline Trajectory parse_pose_lines(const std::string& text, double frame_interval) {
    std::vector<Pose> poses;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<double> f;
        double x;
        while (ls >> x) f.push_back(x);
        if (f.size() != 19)
            throw std::runtime_error("pose line has " + std::to_string(f.size()) + " fields, want 19");
        Pose p;
        for (int i = 0; i < 3; ++i) {
            p.rotation[i * 3 + 0] = f[7 + i * 4 + 0];
            p.rotation[i * 3 + 1] = f[7 + i * 4 + 1];
            p.rotation[i * 3 + 2] = f[7 + i * 4 + 2];
            p.translation[i] = f[7 + i * 4 + 3];
        }
        poses.push_back(p);
    }
    return Trajectory(std::move(poses), frame_interval);
}

// Re-express all poses relative to the first frame so K_1 = identity.
inline Trajectory relative_to_first(const Trajectory& traj) {
    const Pose inv = pose_inverse(traj.pose(0));
    std::vector<Pose> poses;
    poses.reserve(static_cast<size_t>(traj.length()));
    for (int t = 0; t < traj.length(); ++t) poses.push_back(pose_mul(traj.pose(t), inv));
    return Trajectory(std::move(poses), traj.frame_interval());
}

}  // namespace camtraj
