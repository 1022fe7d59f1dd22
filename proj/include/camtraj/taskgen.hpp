#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "camtraj/mat.hpp"
#include "camtraj/rng.hpp"
#include "camtraj/trajectory.hpp"
#include "camtraj/util.hpp"

namespace camtraj {

struct UnsupportedComposite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class MotionClass {
    DollyIn,
    DollyOut,
    PanLeft,
    PanRight,
    TruckLeft,
    TruckRight,
    TiltUp,
    TiltDown,
    Composite,
};

constexpr int kAtomicClassCount = 8;
constexpr int kMotionClassCount = 9;

inline const char* to_string(MotionClass c) {
    switch (c) {
        case MotionClass::DollyIn: return "dolly_in";
        case MotionClass::DollyOut: return "dolly_out";
        case MotionClass::PanLeft: return "pan_left";
        case MotionClass::PanRight: return "pan_right";
        case MotionClass::TruckLeft: return "truck_left";
        case MotionClass::TruckRight: return "truck_right";
        case MotionClass::TiltUp: return "tilt_up";
        case MotionClass::TiltDown: return "tilt_down";
        default: return "composite";
    }
}

inline MotionClass motion_class_from_string(const std::string& s) {
    for (int i = 0; i < kMotionClassCount; ++i) {
        const MotionClass c = static_cast<MotionClass>(i);
        if (s == to_string(c)) return c;
    }
    throw std::invalid_argument("unknown motion class: " + s);
}

enum class Speed { Slow, Regular, Fast };

inline const char* to_string(Speed s) {
    switch (s) {
        case Speed::Slow: return "slow";
        case Speed::Regular: return "regular";
        default: return "fast";
    }
}

inline Speed speed_from_string(const std::string& s) {
    if (s == "slow") return Speed::Slow;
    if (s == "regular") return Speed::Regular;
    if (s == "fast") return Speed::Fast;
    throw std::invalid_argument("unknown speed: " + s);
}

inline double speed_multiplier(Speed s) {
    switch (s) {
        case Speed::Slow: return 0.5;
        case Speed::Regular: return 1.0;
        default: return 2.0;
    }
}

// Motion axes in the first-frame camera basis: +X right, +Y down, +Z viewing.
// dolly = translation along Z, truck = translation along X,
// pan = rotation about Y, tilt = rotation about X.
enum class MotionAxis { TransZ, TransX, RotY, RotX };

struct AxisSign {
    MotionAxis axis;
    double sign;  // +1 along the positive convention direction
    bool rotational;
};

inline AxisSign axis_of(MotionClass c) {
    switch (c) {
        case MotionClass::DollyIn: return {MotionAxis::TransZ, +1.0, false};
        case MotionClass::DollyOut: return {MotionAxis::TransZ, -1.0, false};
        case MotionClass::TruckRight: return {MotionAxis::TransX, +1.0, false};
        case MotionClass::TruckLeft: return {MotionAxis::TransX, -1.0, false};
        case MotionClass::PanRight: return {MotionAxis::RotY, +1.0, true};
        case MotionClass::PanLeft: return {MotionAxis::RotY, -1.0, true};
        case MotionClass::TiltUp: return {MotionAxis::RotX, +1.0, true};
        case MotionClass::TiltDown: return {MotionAxis::RotX, -1.0, true};
        default: throw std::invalid_argument("axis_of: composite has no single axis");
    }
}

struct MagnitudeBounds {
    double lo, hi;
};

// Net magnitudes before speed/depth scaling, sized so that the smallest
// possible net motion stays at >= 2x the evaluation thresholds.
inline MagnitudeBounds magnitude_bounds(MotionClass c) {
    if (c == MotionClass::Composite) return {0.8, 1.2};  // multiplier on component defaults
    return axis_of(c).rotational ? MagnitudeBounds{0.14, 0.44} : MagnitudeBounds{0.8, 1.6};
}

constexpr double kCompositeTransDefault = 1.0;   // scene units
constexpr double kCompositeRotDefault = 0.3;     // radians

struct Instruction {
    MotionClass motion_class = MotionClass::DollyIn;
    Speed speed = Speed::Regular;
    double magnitude = 1.0;
    std::vector<MotionClass> components;  // composite only, 2..3 atomic classes

    void validate() const {
        const bool is_comp = motion_class == MotionClass::Composite;
        if (is_comp != !components.empty())
            throw std::invalid_argument("Instruction: components must be nonempty iff composite");
        const MagnitudeBounds b = magnitude_bounds(motion_class);
        if (!(magnitude >= b.lo && magnitude <= b.hi))
            throw std::invalid_argument("Instruction: magnitude " + std::to_string(magnitude) +
                                        " outside class bounds");
        if (is_comp) {
            if (components.size() < 2 || components.size() > 3)
                throw std::invalid_argument("Instruction: composite needs 2-3 components");
            for (size_t i = 0; i < components.size(); ++i) {
                if (components[i] == MotionClass::Composite)
                    throw UnsupportedComposite("composite components must be atomic");
                for (size_t j = i + 1; j < components.size(); ++j)
                    if (axis_of(components[i]).axis == axis_of(components[j]).axis)
                        throw UnsupportedComposite(
                            std::string("components conflict on the same axis: ") +
                            to_string(components[i]) + " vs " + to_string(components[j]));
            }
        }
    }
};

// Desk-scale stand-in for the visual conditioning. The depth scale is the
// scene's one latent degree of freedom; the feature exposes it through a
// fixed smooth basis so unseen scene seeds stay on the training manifold.
struct SceneStub {
    std::vector<double> feature;
    double depth_scale = 1.0;

    static SceneStub from_seed(std::uint64_t scene_seed, int feature_width) {
        if (feature_width < 1) throw std::invalid_argument("SceneStub: feature width must be >= 1");
        Rng rng = Rng(scene_seed).fork(0x5ce9e);
        SceneStub s;
        s.depth_scale = std::exp2(rng.uniform(-1.0, 1.0));  // [0.5, 2]
        s.feature.resize(static_cast<size_t>(feature_width));
        const double x = std::log2(s.depth_scale);  // in [-1, 1]
        s.feature[0] = x;
        const double pi = 3.14159265358979323846;
        for (size_t i = 1; i < s.feature.size(); ++i) {
            const double k = static_cast<double>((i + 1) / 2);
            s.feature[i] = (i % 2 == 1) ? std::sin(pi * k * x / 2.0) : std::cos(pi * k * x / 2.0);
        }
        return s;
    }
};

namespace detail {
// Ease-in/ease-out progress: position fraction with cosine velocity profile,
// zero velocity at both ends, peak velocity 2x the mean.
inline double ease_progress(double u) {
    const double two_pi = 6.283185307179586476925286766559;
    return u - std::sin(two_pi * u) / two_pi;
}

struct ComponentPlan {
    AxisSign axis;
    double net;       // signed net magnitude (units or radians)
    double jitter;    // signed low-frequency jitter amplitude
};

inline std::vector<ComponentPlan> plan_components(const Instruction& instr, const SceneStub& scene,
                                                  Rng& rng, double jitter_scale = 0.05) {
    instr.validate();
    std::vector<MotionClass> comps;
    if (instr.motion_class == MotionClass::Composite)
        comps = instr.components;
    else
        comps = {instr.motion_class};

    std::vector<ComponentPlan> plans;
    const double speed = speed_multiplier(instr.speed);
    for (MotionClass c : comps) {
        ComponentPlan p;
        p.axis = axis_of(c);
        double base = instr.magnitude;
        if (instr.motion_class == MotionClass::Composite)
            base *= p.axis.rotational ? kCompositeRotDefault : kCompositeTransDefault;
        double net = base * speed;
        if (!p.axis.rotational) net *= scene.depth_scale;
        p.net = p.axis.sign * net;
        // jitter drawn from the shared stream, then signed with the direction
        // so mirror classes stay exact reflections
        p.jitter = p.axis.sign * rng.uniform(-jitter_scale, jitter_scale) * net;
        plans.push_back(p);
    }
    return plans;
}
}  // namespace detail

// Closed-form step bound for generated trajectories. Peak ease velocity is 2x
// the mean, the sin(pi u) jitter perturbs it by at most pi * 5%, and rotating
// while displaced moves the extrinsic translation by up to (step angle) *
// (camera center norm).
inline double generator_step_bound(const Instruction& instr, const SceneStub& scene, int traj_len,
                                   double dt, double w_rot = 1.0) {
    Rng scratch(0);
    const auto plans = detail::plan_components(instr, scene, scratch);
    double rot_net = 0.0, trans_net = 0.0;
    for (const auto& p : plans) (p.axis.rotational ? rot_net : trans_net) += std::abs(p.net);
    const double rate = 2.0 + 0.05 * 3.14159265358979323846;  // per unit u
    const double center_max = 1.05 * trans_net;
    const double per_u = (w_rot * rot_net + trans_net + rot_net * center_max) * rate;
    return per_u / (static_cast<double>(traj_len - 1) * dt);
}

// Parametric trajectory family per instruction class. First pose is the
// identity; displacement follows the eased profile plus a small
// endpoint-preserving sin(pi u) jitter.
inline Trajectory generate_trajectory(const Instruction& instr, const SceneStub& scene, int traj_len,
                                      std::uint64_t seed, double dt = 1.0,
                                      double jitter_scale = 0.05) {
    if (traj_len < 2) throw std::invalid_argument("generate_trajectory: need T >= 2");
    if (jitter_scale < 0.0 || jitter_scale > 0.05)
        throw std::invalid_argument("generate_trajectory: jitter_scale outside [0, 0.05]");
    Rng rng = Rng(seed).fork(0x7261);
    const auto plans = detail::plan_components(instr, scene, rng, jitter_scale);

    const double pi = 3.14159265358979323846;
    std::vector<Pose> poses;
    poses.reserve(static_cast<size_t>(traj_len));
    for (int t = 0; t < traj_len; ++t) {
        const double u = static_cast<double>(t) / (traj_len - 1);
        const double prog = detail::ease_progress(u);
        const double wobble = std::sin(pi * u);

        double tx = 0, ty = 0, tz = 0, yaw = 0, pitch = 0;
        for (const auto& p : plans) {
            const double v = p.net * prog + p.jitter * wobble;
            switch (p.axis.axis) {
                case MotionAxis::TransZ: tz += v; break;
                case MotionAxis::TransX: tx += v; break;
                case MotionAxis::RotY: yaw += v; break;
                case MotionAxis::RotX: pitch += v; break;
            }
        }
        // camera-to-world orientation: yaw about Y then pitch about X
        const Rot3 basis = rot_mul(rot_about_y(yaw), rot_about_x(pitch));
        Pose pose;
        pose.rotation = rot_transpose(basis);
        const Vec3 center = {tx, ty, tz};
        const Vec3 rc = rot_apply(pose.rotation, center);
        pose.translation = {-rc[0], -rc[1], -rc[2]};
        poses.push_back(pose);
    }
    return Trajectory(std::move(poses), dt);
}

// Raw conditioning features: one-hot class, one-hot speed, normalized
// magnitude, multi-hot components, scene feature. The learned projection to
// the token space lives inside the denoiser.
inline std::vector<double> encode_condition(const Instruction& instr, const SceneStub& scene) {
    instr.validate();
    std::vector<double> v;
    v.reserve(static_cast<size_t>(kMotionClassCount + 3 + 1 + kAtomicClassCount) +
              scene.feature.size());
    for (int i = 0; i < kMotionClassCount; ++i)
        v.push_back(static_cast<int>(instr.motion_class) == i ? 1.0 : 0.0);
    for (int i = 0; i < 3; ++i) v.push_back(static_cast<int>(instr.speed) == i ? 1.0 : 0.0);
    const MagnitudeBounds b = magnitude_bounds(instr.motion_class);
    v.push_back((instr.magnitude - b.lo) / (b.hi - b.lo));
    std::vector<double> comp_hot(static_cast<size_t>(kAtomicClassCount), 0.0);
    for (MotionClass c : instr.components) comp_hot[static_cast<size_t>(c)] = 1.0;
    v.insert(v.end(), comp_hot.begin(), comp_hot.end());
    v.insert(v.end(), scene.feature.begin(), scene.feature.end());
    return v;
}

constexpr int kCondFixedWidth = kMotionClassCount + 3 + 1 + kAtomicClassCount;  // 21

inline int scene_feature_width(int cond_dim) {
    if (cond_dim <= kCondFixedWidth)
        throw std::invalid_argument("cond_dim must exceed " + std::to_string(kCondFixedWidth));
    return cond_dim - kCondFixedWidth;
}

// --- dataset -----------------------------------------------------------------

struct DatasetRecord {
    std::string id;
    Instruction instruction;
    std::uint64_t scene_seed = 0;
    double depth_scale = 1.0;
    double dt = 1.0;
    Mat traj;  // T x 12 flat values
};

struct DatasetSpec {
    int per_class = 100;
    int traj_len = 13;
    double dt = 1.0;
    std::uint64_t seed = 1;
    std::vector<MotionClass> classes = {
        MotionClass::DollyIn,  MotionClass::DollyOut,  MotionClass::PanLeft,
        MotionClass::PanRight, MotionClass::TruckLeft, MotionClass::TruckRight,
        MotionClass::TiltUp,   MotionClass::TiltDown,  MotionClass::Composite,
    };
};

inline Instruction sample_instruction(MotionClass cls, Rng& rng) {
    Instruction instr;
    instr.motion_class = cls;
    instr.speed = static_cast<Speed>(rng.bounded(3));
    const MagnitudeBounds b = magnitude_bounds(cls);
    instr.magnitude = rng.uniform(b.lo, b.hi);
    if (cls == MotionClass::Composite) {
        // 2-3 atomic components on distinct axes
        const int want = 2 + static_cast<int>(rng.bounded(2));
        std::vector<int> axes = {0, 1, 2, 3};  // TransZ, TransX, RotY, RotX families
        for (int i = 3; i > 0; --i) std::swap(axes[static_cast<size_t>(i)], axes[rng.bounded(static_cast<std::uint64_t>(i) + 1)]);
        static const MotionClass kByAxis[4][2] = {
            {MotionClass::DollyIn, MotionClass::DollyOut},
            {MotionClass::TruckRight, MotionClass::TruckLeft},
            {MotionClass::PanRight, MotionClass::PanLeft},
            {MotionClass::TiltUp, MotionClass::TiltDown},
        };
        for (int i = 0; i < want; ++i)
            instr.components.push_back(kByAxis[axes[static_cast<size_t>(i)]][rng.bounded(2)]);
    }
    instr.validate();
    return instr;
}

inline std::string serialize_record(const DatasetRecord& rec) {
    std::ostringstream out;
    out << "{\"id\":\"" << rec.id << "\",\"class\":\"" << to_string(rec.instruction.motion_class)
        << "\",\"speed\":\"" << to_string(rec.instruction.speed) << "\",\"magnitude\":"
        << fmt_g17(rec.instruction.magnitude) << ",\"components\":[";
    for (size_t i = 0; i < rec.instruction.components.size(); ++i)
        out << (i ? "," : "") << '"' << to_string(rec.instruction.components[i]) << '"';
    out << "],\"scene_seed\":" << rec.scene_seed << ",\"depth_scale\":" << fmt_g17(rec.depth_scale)
        << ",\"dt\":" << fmt_g17(rec.dt) << ",\"traj\":[";
    for (int t = 0; t < rec.traj.rows(); ++t) {
        out << (t ? ",[" : "[");
        for (int c = 0; c < rec.traj.cols(); ++c) out << (c ? "," : "") << fmt_g17(rec.traj(t, c));
        out << ']';
    }
    out << "]}";
    return out.str();
}

inline DatasetRecord parse_record(const std::string& line) {
    const nlohmann::json j = nlohmann::json::parse(line);
    DatasetRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.instruction.motion_class = motion_class_from_string(j.at("class").get<std::string>());
    rec.instruction.speed = speed_from_string(j.at("speed").get<std::string>());
    rec.instruction.magnitude = j.at("magnitude").get<double>();
    for (const auto& c : j.at("components"))
        rec.instruction.components.push_back(motion_class_from_string(c.get<std::string>()));
    rec.instruction.validate();
    rec.scene_seed = j.at("scene_seed").get<std::uint64_t>();
    rec.depth_scale = j.at("depth_scale").get<double>();
    rec.dt = j.at("dt").get<double>();
    const auto& rows = j.at("traj");
    if (rows.empty()) throw std::runtime_error("record " + rec.id + ": empty trajectory");
    rec.traj = Mat(static_cast<int>(rows.size()), kPoseChannels);
    for (size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != kPoseChannels)
            throw std::runtime_error("record " + rec.id + ": row width != 12");
        for (int c = 0; c < kPoseChannels; ++c) rec.traj(static_cast<int>(t), c) = rows[t][static_cast<size_t>(c)].get<double>();
    }
    return rec;
}

// Deterministic JSONL dataset. Every record is checked for sane motion and
// the generator's Lipschitz bound before it is written.
constexpr int kDefaultCondDim = 32;
constexpr int kDefaultSceneFeatureWidth = kDefaultCondDim - kCondFixedWidth;  // 11

inline std::string build_dataset_text(const DatasetSpec& spec) {
    if (spec.per_class < 1) throw std::invalid_argument("build_dataset: per_class must be >= 1");
    if (spec.classes.empty()) throw std::invalid_argument("build_dataset: no classes selected");
    std::ostringstream out;
    for (size_t ci = 0; ci < spec.classes.size(); ++ci) {
        const MotionClass cls = spec.classes[ci];
        for (int k = 0; k < spec.per_class; ++k) {
            Rng rng = Rng(spec.seed).fork(static_cast<std::uint64_t>(ci) * 1000003u +
                                          static_cast<std::uint64_t>(k));
            DatasetRecord rec;
            rec.id = std::string(to_string(cls)) + "-" + std::to_string(k);
            rec.instruction = sample_instruction(cls, rng);
            rec.scene_seed = rng.next_u64();
            SceneStub scene = SceneStub::from_seed(rec.scene_seed, kDefaultSceneFeatureWidth);
            rec.depth_scale = scene.depth_scale;
            rec.dt = spec.dt;
            const std::uint64_t traj_seed = rng.next_u64();
            const Trajectory traj =
                generate_trajectory(rec.instruction, scene, spec.traj_len, traj_seed, spec.dt);

            if (validate_motion(traj, 0.01, 1e9) != MotionVerdict::Ok)
                throw std::runtime_error("build_dataset: generated record failed motion check");
            const double bound = generator_step_bound(rec.instruction, scene, spec.traj_len, spec.dt);
            if (!check_lipschitz(traj, bound).pass)
                throw std::runtime_error("build_dataset: generated record failed Lipschitz bound");

            rec.traj = flatten(traj).values;
            out << serialize_record(rec) << '\n';
        }
    }
    return out.str();
}

inline std::vector<DatasetRecord> parse_dataset_text(const std::string& text) {
    std::vector<DatasetRecord> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse_record(line));
    }
    return out;
}

}  // namespace camtraj
