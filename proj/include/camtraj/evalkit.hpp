#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "camtraj/analysis.hpp"
#include "camtraj/denoiser.hpp"
#include "camtraj/losses.hpp"
#include "camtraj/taskgen.hpp"
#include "camtraj/trajectory.hpp"

namespace camtraj {

struct EvalThresholds {
    double translation = 0.1;                       // scene units, net
    double rotation = 0.034906585039886590;        // 2 degrees in radians, net
    double speed_tolerance = 0.3;                   // +-30% on mean speed
    double w_rot = 1.0;
};

struct AxisScores {
    Vec3 net_translation = {0, 0, 0};  // first-frame camera basis
    Vec3 net_rotation = {0, 0, 0};     // rotation vector, first-frame camera basis
};

enum class VerdictKind { Static, Atomic, Composite };

struct EvalVerdict {
    VerdictKind kind = VerdictKind::Static;
    MotionClass atomic_class = MotionClass::DollyIn;   // valid when kind == Atomic
    std::vector<MotionClass> components;               // valid when kind == Composite
    AxisScores axis_scores;

    std::string label() const {
        switch (kind) {
            case VerdictKind::Static: return "static";
            case VerdictKind::Atomic: return to_string(atomic_class);
            default: {
                std::string s = "composite:";
                for (size_t i = 0; i < components.size(); ++i)
                    s += std::string(i ? "+" : "") + to_string(components[i]);
                return s;
            }
        }
    }
};

// Net motion relative to the first frame, expressed in the first camera's
// local basis. Classification looks only at the four class axes; the full
// six-axis scores are reported for inspection.
inline EvalVerdict classify_motion(const Trajectory& traj, const EvalThresholds& thr = {}) {
    const Pose& first = traj.pose(0);
    const Pose& last = traj.pose(traj.length() - 1);

    const Vec3 c0 = camera_center(first);
    const Vec3 c1 = camera_center(last);
    const Vec3 dc = {c1[0] - c0[0], c1[1] - c0[1], c1[2] - c0[2]};

    EvalVerdict v;
    v.axis_scores.net_translation = rot_apply(first.rotation, dc);
    v.axis_scores.net_rotation = rot_log(rot_mul(first.rotation, rot_transpose(last.rotation)));

    struct Candidate {
        MotionClass pos, neg;
        double value;
        double threshold;
    };
    const Candidate candidates[] = {
        {MotionClass::DollyIn, MotionClass::DollyOut, v.axis_scores.net_translation[2], thr.translation},
        {MotionClass::TruckRight, MotionClass::TruckLeft, v.axis_scores.net_translation[0], thr.translation},
        {MotionClass::PanRight, MotionClass::PanLeft, v.axis_scores.net_rotation[1], thr.rotation},
        {MotionClass::TiltUp, MotionClass::TiltDown, v.axis_scores.net_rotation[0], thr.rotation},
    };

    struct Active {
        MotionClass cls;
        double strength;  // |value| / threshold
    };
    std::vector<Active> active;
    for (const Candidate& c : candidates)
        if (std::abs(c.value) > c.threshold)
            active.push_back({c.value > 0 ? c.pos : c.neg, std::abs(c.value) / c.threshold});

    if (active.empty()) {
        v.kind = VerdictKind::Static;
    } else if (active.size() == 1) {
        v.kind = VerdictKind::Atomic;
        v.atomic_class = active[0].cls;
    } else {
        v.kind = VerdictKind::Composite;
        std::stable_sort(active.begin(), active.end(),
                         [](const Active& a, const Active& b) { return a.strength > b.strength; });
        for (const Active& a : active) v.components.push_back(a.cls);
    }
    return v;
}

inline bool verdict_matches(const EvalVerdict& verdict, const Instruction& instr) {
    if (instr.motion_class == MotionClass::Composite) {
        if (verdict.kind != VerdictKind::Composite) return false;
        std::vector<MotionClass> want = instr.components;
        std::vector<MotionClass> got = verdict.components;
        std::sort(want.begin(), want.end());
        std::sort(got.begin(), got.end());
        return want == got;
    }
    return verdict.kind == VerdictKind::Atomic && verdict.atomic_class == instr.motion_class;
}

// Separate speed fidelity check: mean geodesic step speed within tolerance of
// the instruction's nominal. Reported alongside the class verdict, not part
// of it.
inline bool speed_matches(const Trajectory& traj, const Instruction& instr, const SceneStub& scene,
                          const EvalThresholds& thr = {}) {
    Rng scratch(0);
    const auto plans = detail::plan_components(instr, scene, scratch);
    double nominal_path = 0.0;
    for (const auto& p : plans)
        nominal_path += (p.axis.rotational ? thr.w_rot : 1.0) * std::abs(p.net);
    const double nominal =
        nominal_path / (static_cast<double>(traj.length() - 1) * traj.frame_interval());
    double total = 0.0;
    for (int t = 0; t + 1 < traj.length(); ++t)
        total += geodesic_step(traj.pose(t), traj.pose(t + 1), thr.w_rot);
    const double observed = total / (static_cast<double>(traj.length() - 1) * traj.frame_interval());
    return observed >= nominal * (1.0 - thr.speed_tolerance) &&
           observed <= nominal * (1.0 + thr.speed_tolerance);
}

struct LabeledTrajectory {
    Instruction instruction;
    Trajectory trajectory;
};

struct ClassTable {
    std::map<std::string, std::pair<int, int>> per_class;  // class -> (matched, total)
    double overall = 0.0;
};

inline ClassTable success_rate(const std::vector<LabeledTrajectory>& samples,
                               const EvalThresholds& thr = {}) {
    if (samples.empty()) throw std::invalid_argument("success_rate: empty sample list");
    ClassTable out;
    int matched = 0;
    for (const LabeledTrajectory& s : samples) {
        const EvalVerdict v = classify_motion(s.trajectory, thr);
        const bool ok = verdict_matches(v, s.instruction);
        matched += ok ? 1 : 0;
        auto& bucket = out.per_class[to_string(s.instruction.motion_class)];
        bucket.second += 1;
        bucket.first += ok ? 1 : 0;
    }
    out.overall = static_cast<double>(matched) / static_cast<double>(samples.size());
    return out;
}

// --- model-in-the-loop evaluation ---------------------------------------------

struct EvalItem {
    Instruction instruction;
    std::uint64_t scene_seed = 0;
    SceneStub scene;
};

inline std::vector<EvalItem> make_eval_items(int per_class, const std::vector<MotionClass>& classes,
                                             std::uint64_t seed, int feature_width) {
    std::vector<EvalItem> items;
    for (size_t ci = 0; ci < classes.size(); ++ci)
        for (int k = 0; k < per_class; ++k) {
            Rng rng = Rng(seed).fork(0xe7a1000 + ci * 100003 + static_cast<std::uint64_t>(k));
            EvalItem item;
            item.instruction = sample_instruction(classes[ci], rng);
            item.scene_seed = rng.next_u64();
            item.scene = SceneStub::from_seed(item.scene_seed, feature_width);
            items.push_back(std::move(item));
        }
    return items;
}

struct EvalSample {
    EvalVerdict verdict;
    bool matched = false;
    bool speed_ok = false;
    bool degenerate = false;  // unflatten failed on the raw sample
    double jerk_value = 0.0;
    double lf_fraction = 0.0;
    std::uint64_t sample_seed = 0;
};

struct EvalResult {
    std::vector<EvalSample> samples;
    ClassTable table;
    double mean_jerk = 0.0;
    double mean_lf_fraction = 0.0;
};

inline EvalSample evaluate_one(const Model& model, const EvalItem& item, std::uint64_t sample_seed,
                               const EvalThresholds& thr) {
    EvalSample out;
    out.sample_seed = sample_seed;
    const std::vector<double> cond = encode_condition(item.instruction, item.scene);
    const FlatTrajectory flat = sample(cond, model.params, model.sched, model.cfg, sample_seed,
                                       model.norm);
    out.jerk_value = jerk(flat.values);
    const WaveletPyramid pyr = dwt_multi(flat.values, model.loss_cfg.levels);
    const EnergySplit e = energy_split(pyr);
    out.lf_fraction = e.total > 0.0 ? e.approx_energy / e.total : 1.0;
    try {
        const Trajectory traj = unflatten(flat, 1.0);
        out.verdict = classify_motion(traj, thr);
        out.matched = verdict_matches(out.verdict, item.instruction);
        out.speed_ok = speed_matches(traj, item.instruction, item.scene, thr);
    } catch (const DegenerateRotation&) {
        out.degenerate = true;
        out.matched = false;
    }
    return out;
}

inline EvalResult evaluate_model(const Model& model, const std::vector<EvalItem>& items,
                                 std::uint64_t sample_seed_base, const EvalThresholds& thr = {},
                                 int workers = 1) {
    if (items.empty()) throw std::invalid_argument("evaluate_model: no items");
    EvalResult res;
    res.samples.resize(items.size());

    std::atomic<size_t> next{0};
    auto run = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= items.size()) return;
            const std::uint64_t seed = Rng(sample_seed_base).fork(0x5a3000 + i).seed();
            res.samples[i] = evaluate_one(model, items[i], seed, thr);
        }
    };
    if (workers <= 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(run);
        for (std::thread& th : pool) th.join();
    }

    int matched = 0;
    for (size_t i = 0; i < items.size(); ++i) {
        const EvalSample& s = res.samples[i];
        auto& bucket = res.table.per_class[to_string(items[i].instruction.motion_class)];
        bucket.second += 1;
        bucket.first += s.matched ? 1 : 0;
        matched += s.matched ? 1 : 0;
        res.mean_jerk += s.jerk_value;
        res.mean_lf_fraction += s.lf_fraction;
    }
    res.table.overall = static_cast<double>(matched) / static_cast<double>(items.size());
    res.mean_jerk /= static_cast<double>(items.size());
    res.mean_lf_fraction /= static_cast<double>(items.size());
    return res;
}

struct DiversityReport {
    double mean_variance = 0.0;   // per-coordinate sample variance, averaged
    double match_fraction = 0.0;  // seeds whose classification matches the condition
};

inline DiversityReport diversity(const Instruction& instr, const SceneStub& scene,
                                 const Model& model, int n_seeds, std::uint64_t seed_base,
                                 const EvalThresholds& thr = {}) {
    if (n_seeds < 2) throw std::invalid_argument("diversity: need at least 2 seeds");
    const std::vector<double> cond = encode_condition(instr, scene);
    std::vector<Mat> flats;
    int matched = 0;
    for (int i = 0; i < n_seeds; ++i) {
        const std::uint64_t seed = Rng(seed_base).fork(0xd1f000 + static_cast<std::uint64_t>(i)).seed();
        const FlatTrajectory flat = sample(cond, model.params, model.sched, model.cfg, seed, model.norm);
        flats.push_back(flat.values);
        try {
            const EvalVerdict v = classify_motion(unflatten(flat, 1.0), thr);
            matched += verdict_matches(v, instr) ? 1 : 0;
        } catch (const DegenerateRotation&) {
        }
    }
    DiversityReport rep;
    const size_t numel = flats[0].size();
    for (size_t j = 0; j < numel; ++j) {
        double mean = 0.0;
        for (const Mat& m : flats) mean += m.data()[j];
        mean /= n_seeds;
        double var = 0.0;
        for (const Mat& m : flats) var += (m.data()[j] - mean) * (m.data()[j] - mean);
        rep.mean_variance += var / n_seeds;
    }
    rep.mean_variance /= static_cast<double>(numel);
    rep.match_fraction = static_cast<double>(matched) / n_seeds;
    return rep;
}

// --- beta sweep ----------------------------------------------------------------

struct SweepSpec {
    std::vector<RawItem> dataset;   // shared training data
    TrainOptions train;             // beta is overridden per cell
    std::vector<EvalItem> eval_items;
    std::uint64_t eval_seed = 99;
    EvalThresholds thresholds;
    int eval_workers = 1;
};

struct SweepRow {
    double beta = 0.0;
    bool failed = false;
    std::string error;
    double success = 0.0;
    double mean_jerk = 0.0;
    double lf_fraction = 0.0;
};

// Trains one model per beta from identical initialization and data order;
// cells are independent and may run in parallel.
inline std::vector<SweepRow> beta_sweep(const std::vector<double>& betas, const SweepSpec& spec,
                                        int cell_workers = 1) {
    if (betas.empty()) throw std::invalid_argument("beta_sweep: no betas given");
    std::vector<SweepRow> rows(betas.size());

    std::atomic<size_t> next{0};
    auto run_cells = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= betas.size()) return;
            SweepRow& row = rows[i];
            row.beta = betas[i];
            try {
                TrainOptions opts = spec.train;
                opts.loss_cfg = WavRegConfig(spec.train.loss_cfg.levels,
                                             spec.train.loss_cfg.weight_approx,
                                             spec.train.loss_cfg.weight_details, betas[i]);
                const TrainResult tr = train_denoiser(spec.dataset, opts);
                const EvalResult ev = evaluate_model(tr.model, spec.eval_items, spec.eval_seed,
                                                     spec.thresholds, spec.eval_workers);
                row.success = ev.table.overall;
                row.mean_jerk = ev.mean_jerk;
                row.lf_fraction = ev.mean_lf_fraction;
            } catch (const std::exception& e) {
                row.failed = true;
                row.error = e.what();
            }
        }
    };
    if (cell_workers <= 1) {
        run_cells();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < cell_workers; ++w) pool.emplace_back(run_cells);
        for (std::thread& th : pool) th.join();
    }
    return rows;
}

}  // namespace camtraj
