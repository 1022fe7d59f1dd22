#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "camtraj/evalkit.hpp"
#include "test_helpers.hpp"

using namespace camtraj;

TEST_SUITE_BEGIN("evalkit");

namespace {
Instruction atomic_instruction(MotionClass cls, Speed speed = Speed::Regular) {
    Instruction instr;
    instr.motion_class = cls;
    instr.speed = speed;
    const MagnitudeBounds b = magnitude_bounds(cls);
    instr.magnitude = 0.5 * (b.lo + b.hi);
    return instr;
}

Trajectory generated(const Instruction& instr, std::uint64_t seed) {
    const SceneStub scene = SceneStub::from_seed(seed, kDefaultSceneFeatureWidth);
    return generate_trajectory(instr, scene, 13, seed);
}
}  // namespace

TEST_CASE("classify_motion recovers every atomic class") {
    for (int c = 0; c < kAtomicClassCount; ++c) {
        const MotionClass cls = static_cast<MotionClass>(c);
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            Rng rng(seed * 7 + static_cast<std::uint64_t>(c));
            const Instruction instr = sample_instruction(cls, rng);
            const EvalVerdict v = classify_motion(generated(instr, seed));
            REQUIRE(v.kind == VerdictKind::Atomic);
            CHECK(v.atomic_class == cls);
            CHECK(verdict_matches(v, instr));
        }
    }
}

TEST_CASE("constant trajectory is Static") {
    const Trajectory traj(std::vector<Pose>(5), 1.0);
    const EvalVerdict v = classify_motion(traj);
    CHECK(v.kind == VerdictKind::Static);
    CHECK(v.label() == "static");
}

TEST_CASE("composite classification finds exactly the generating components") {
    Instruction instr;
    instr.motion_class = MotionClass::Composite;
    instr.magnitude = 1.0;
    instr.components = {MotionClass::TruckRight, MotionClass::TiltUp};
    const EvalVerdict v = classify_motion(generated(instr, 9));
    REQUIRE(v.kind == VerdictKind::Composite);
    REQUIRE(v.components.size() == 2);
    CHECK(verdict_matches(v, instr));
    std::vector<MotionClass> got = v.components;
    std::sort(got.begin(), got.end());
    CHECK(got == std::vector<MotionClass>{MotionClass::TruckRight, MotionClass::TiltUp});

    Instruction other = instr;
    other.components = {MotionClass::TruckRight, MotionClass::TiltDown};
    CHECK_FALSE(verdict_matches(v, other));
}

TEST_CASE("classification is invariant to rigid re-expression of the world") {
    Rng rng(31);
    Pose world;  // fixed world-frame change, applied to every pose
    world.rotation = camtraj::testing::random_rotation(rng);
    world.translation = {0.4, -1.2, 2.0};

    for (int c = 0; c < kAtomicClassCount; ++c) {
        const Instruction instr = atomic_instruction(static_cast<MotionClass>(c));
        const Trajectory traj = generated(instr, 77);
        std::vector<Pose> moved;
        for (const Pose& p : traj.poses()) moved.push_back(pose_mul(p, world));
        const Trajectory shifted(std::move(moved), traj.frame_interval());

        const EvalVerdict a = classify_motion(traj);
        const EvalVerdict b = classify_motion(shifted);
        CHECK(a.kind == b.kind);
        CHECK(a.label() == b.label());
    }
}

TEST_CASE("translation verdicts are scale covariant") {
    const Instruction instr = atomic_instruction(MotionClass::TruckLeft);
    const Trajectory traj = generated(instr, 5);
    std::vector<Pose> scaled;
    for (const Pose& p : traj.poses()) {
        Pose q = p;
        for (double& t : q.translation) t *= 3.0;
        scaled.push_back(q);
    }
    const EvalVerdict v = classify_motion(Trajectory(std::move(scaled), 1.0));
    REQUIRE(v.kind == VerdictKind::Atomic);
    CHECK(v.atomic_class == MotionClass::TruckLeft);
}

TEST_CASE("success_rate") {
    std::vector<LabeledTrajectory> samples;
    for (int c = 0; c < kAtomicClassCount; ++c) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            Rng rng(seed * 13 + static_cast<std::uint64_t>(c));
            const Instruction instr = sample_instruction(static_cast<MotionClass>(c), rng);
            samples.push_back({instr, generated(instr, seed + 100)});
        }
    }

    SUBCASE("noiseless generated data scores 1.0") {
        const ClassTable table = success_rate(samples);
        CHECK(table.overall == 1.0);
        for (const auto& [cls, mt] : table.per_class) {
            CHECK(mt.first == mt.second);
            CHECK(mt.second == 4);
        }
    }
    SUBCASE("permutation invariance") {
        const ClassTable base = success_rate(samples);
        std::vector<LabeledTrajectory> shuffled = samples;
        Rng rng(3);
        for (size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[rng.bounded(i)]);
        const ClassTable perm = success_rate(shuffled);
        CHECK(perm.overall == base.overall);
        CHECK(perm.per_class == base.per_class);
    }
    SUBCASE("classes without samples are absent, not zero") {
        const ClassTable table = success_rate(samples);
        CHECK(table.per_class.find("composite") == table.per_class.end());
    }
    SUBCASE("shuffled labels fall to chance level") {
        // 1000 samples over the 8 atomic classes with randomly reassigned labels
        std::vector<LabeledTrajectory> mislabeled;
        Rng rng(17);
        for (int i = 0; i < 1000; ++i) {
            const MotionClass true_cls = static_cast<MotionClass>(rng.bounded(kAtomicClassCount));
            const MotionClass label_cls = static_cast<MotionClass>(rng.bounded(kAtomicClassCount));
            Rng irng(static_cast<std::uint64_t>(i) + 5000);
            Instruction true_instr = sample_instruction(true_cls, irng);
            const Instruction label_instr = sample_instruction(label_cls, irng);
            mislabeled.push_back({label_instr, generated(true_instr, static_cast<std::uint64_t>(i))});
        }
        const double rate = success_rate(mislabeled).overall;
        CHECK(rate > 0.05);
        CHECK(rate < 0.22);
    }
}

TEST_CASE("speed check distinguishes paces on translation classes") {
    const SceneStub scene = SceneStub::from_seed(21, kDefaultSceneFeatureWidth);
    const Instruction regular = atomic_instruction(MotionClass::DollyIn, Speed::Regular);
    const Trajectory traj = generate_trajectory(regular, scene, 13, 21);
    CHECK(speed_matches(traj, regular, scene));

    // the same trajectory judged against a fast instruction fails the check
    Instruction fast = regular;
    fast.speed = Speed::Fast;
    CHECK_FALSE(speed_matches(traj, fast, scene));
}

TEST_CASE("diversity rejects fewer than two seeds and reports positive variance") {
    DenoiserConfig cfg;
    cfg.traj_len = 6;
    cfg.channels = 12;
    cfg.latent_dim = 8;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.cond_dim = kDefaultCondDim;
    const NoiseSchedule sched = cosine_schedule(10);
    DenoiserParams params = init_denoiser_params(cfg, sched.steps, Rng(1));
    NormStats norm;
    norm.mean.assign(12, 0.0);
    norm.stdev.assign(12, 1.0);
    const Model model{cfg, params, sched, norm, WavRegConfig::defaults(), 0};

    const Instruction instr = atomic_instruction(MotionClass::DollyIn);
    const SceneStub scene = SceneStub::from_seed(2, kDefaultSceneFeatureWidth);

    CHECK_THROWS_AS(diversity(instr, scene, model, 1, 7), std::invalid_argument);
    const DiversityReport rep = diversity(instr, scene, model, 4, 7);
    CHECK(rep.mean_variance > 0.0);
}

TEST_CASE("evaluation results are independent of worker count") {
    DenoiserConfig cfg;
    cfg.traj_len = 6;
    cfg.channels = 12;
    cfg.latent_dim = 8;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.cond_dim = kDefaultCondDim;
    const NoiseSchedule sched = cosine_schedule(8);
    DenoiserParams params = init_denoiser_params(cfg, sched.steps, Rng(4));
    NormStats norm;
    norm.mean.assign(12, 0.0);
    norm.stdev.assign(12, 1.0);
    const Model model{cfg, params, sched, norm, WavRegConfig::defaults(), 0};

    const auto items = make_eval_items(2, {MotionClass::DollyIn, MotionClass::PanRight}, 3,
                                       kDefaultSceneFeatureWidth);
    const EvalResult serial = evaluate_model(model, items, 17, {}, 1);
    const EvalResult parallel = evaluate_model(model, items, 17, {}, 3);
    REQUIRE(serial.samples.size() == parallel.samples.size());
    CHECK(serial.table.overall == parallel.table.overall);
    CHECK(serial.mean_jerk == parallel.mean_jerk);
    for (size_t i = 0; i < serial.samples.size(); ++i) {
        CHECK(serial.samples[i].jerk_value == parallel.samples[i].jerk_value);
        CHECK(serial.samples[i].sample_seed == parallel.samples[i].sample_seed);
    }
}

TEST_CASE("beta_sweep single cell runs the baseline") {
    DatasetSpec dspec;
    dspec.per_class = 2;
    dspec.traj_len = 6;
    dspec.seed = 3;
    dspec.classes = {MotionClass::DollyIn, MotionClass::DollyOut};
    const auto records = parse_dataset_text(build_dataset_text(dspec));

    SweepSpec spec;
    for (const auto& r : records) {
        const SceneStub scene = SceneStub::from_seed(r.scene_seed, kDefaultSceneFeatureWidth);
        spec.dataset.push_back({r.traj, encode_condition(r.instruction, scene)});
    }
    spec.train.cfg.traj_len = 6;
    spec.train.cfg.latent_dim = 8;
    spec.train.cfg.depth = 1;
    spec.train.cfg.heads = 2;
    spec.train.cfg.cond_dim = kDefaultCondDim;
    spec.train.steps = 5;
    spec.train.batch_size = 2;
    spec.train.sched_steps = 8;
    spec.eval_items = make_eval_items(1, dspec.classes, 55, kDefaultSceneFeatureWidth);

    const auto rows = beta_sweep({0.0}, spec);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].beta == 0.0);
    CHECK_FALSE(rows[0].failed);
    CHECK(rows[0].success >= 0.0);
    CHECK(rows[0].success <= 1.0);
    CHECK(rows[0].mean_jerk >= 0.0);
}

TEST_SUITE_END();
