#include <doctest.h>

#include <cmath>
#include <set>

#include "camtraj/analysis.hpp"
#include "camtraj/taskgen.hpp"
#include "test_helpers.hpp"

using namespace camtraj;

TEST_SUITE_BEGIN("taskgen");

namespace {
Instruction atomic_instruction(MotionClass cls, Speed speed = Speed::Regular,
                               double magnitude = -1.0) {
    Instruction instr;
    instr.motion_class = cls;
    instr.speed = speed;
    const MagnitudeBounds b = magnitude_bounds(cls);
    instr.magnitude = magnitude > 0 ? magnitude : 0.5 * (b.lo + b.hi);
    return instr;
}
}  // namespace

TEST_CASE("dolly_in moves forward with identity rotations") {
    Instruction instr = atomic_instruction(MotionClass::DollyIn, Speed::Regular, 1.0);
    const SceneStub scene = SceneStub::from_seed(11, kDefaultSceneFeatureWidth);
    const Trajectory traj = generate_trajectory(instr, scene, 13, 11, 1.0, 0.0);  // no jitter

    double prev = -1e9;
    for (int t = 0; t < traj.length(); ++t) {
        for (int i = 0; i < 9; ++i) CHECK(traj.pose(t).rotation[i] == rot_identity()[i]);
        const double z = camera_center(traj.pose(t))[2];
        CHECK(z >= prev);
        prev = z;
    }
    CHECK(camera_center(traj.pose(0))[2] == 0.0);
    CHECK(prev == doctest::Approx(1.0 * scene.depth_scale).epsilon(1e-12));
}

TEST_CASE("first pose is always the identity") {
    for (int c = 0; c < kMotionClassCount; ++c) {
        Instruction instr;
        if (static_cast<MotionClass>(c) == MotionClass::Composite) {
            instr = atomic_instruction(MotionClass::Composite);
            instr.components = {MotionClass::DollyIn, MotionClass::PanLeft};
        } else {
            instr = atomic_instruction(static_cast<MotionClass>(c));
        }
        const SceneStub scene = SceneStub::from_seed(3, kDefaultSceneFeatureWidth);
        const Trajectory traj = generate_trajectory(instr, scene, 8, 5);
        for (int i = 0; i < 9; ++i) CHECK(traj.pose(0).rotation[i] == rot_identity()[i]);
        for (int i = 0; i < 3; ++i) CHECK(traj.pose(0).translation[i] == 0.0);
    }
}

TEST_CASE("left/right pairs are exact frame-by-frame inverses") {
    const SceneStub scene = SceneStub::from_seed(7, kDefaultSceneFeatureWidth);
    const std::pair<MotionClass, MotionClass> pairs[] = {
        {MotionClass::PanLeft, MotionClass::PanRight},
        {MotionClass::TiltUp, MotionClass::TiltDown},
    };
    for (const auto& [a, b] : pairs) {
        const Trajectory ta = generate_trajectory(atomic_instruction(a), scene, 9, 42);
        const Trajectory tb = generate_trajectory(atomic_instruction(b), scene, 9, 42);
        for (int t = 0; t < 9; ++t) {
            const Rot3 inv = rot_transpose(tb.pose(t).rotation);
            for (int i = 0; i < 9; ++i) CHECK(ta.pose(t).rotation[i] == inv[i]);
        }
    }
    // translation mirror: truck_left is the x-negation of truck_right
    const Trajectory tr = generate_trajectory(atomic_instruction(MotionClass::TruckRight), scene, 9, 42);
    const Trajectory tl = generate_trajectory(atomic_instruction(MotionClass::TruckLeft), scene, 9, 42);
    for (int t = 0; t < 9; ++t) {
        CHECK(camera_center(tl.pose(t))[0] == -camera_center(tr.pose(t))[0]);
        CHECK(camera_center(tl.pose(t))[2] == camera_center(tr.pose(t))[2]);
    }
}

TEST_CASE("every class passes its closed-form Lipschitz bound") {
    for (int c = 0; c < kMotionClassCount; ++c) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            Rng rng(seed * 31 + static_cast<std::uint64_t>(c));
            const Instruction instr = sample_instruction(static_cast<MotionClass>(c), rng);
            const SceneStub scene = SceneStub::from_seed(rng.next_u64(), kDefaultSceneFeatureWidth);
            const Trajectory traj = generate_trajectory(instr, scene, 13, seed);
            const double bound = generator_step_bound(instr, scene, 13, 1.0);
            CHECK(check_lipschitz(traj, bound).pass);
        }
    }
}

TEST_CASE("generated trajectories are low-frequency dominated") {
    for (int c = 0; c < kMotionClassCount; ++c) {
        Rng rng(200 + static_cast<std::uint64_t>(c));
        const Instruction instr = sample_instruction(static_cast<MotionClass>(c), rng);
        const SceneStub scene = SceneStub::from_seed(rng.next_u64(), kDefaultSceneFeatureWidth);
        const Trajectory traj = generate_trajectory(instr, scene, 13, 99 + static_cast<std::uint64_t>(c));
        CHECK(analyze(traj).lf_fraction > 0.9);
    }
}

TEST_CASE("composite validation") {
    Instruction instr;
    instr.motion_class = MotionClass::Composite;
    instr.magnitude = 1.0;
    SUBCASE("conflicting axes are rejected") {
        instr.components = {MotionClass::PanLeft, MotionClass::PanRight};
        CHECK_THROWS_AS(instr.validate(), UnsupportedComposite);
        instr.components = {MotionClass::DollyIn, MotionClass::DollyOut};
        CHECK_THROWS_AS(instr.validate(), UnsupportedComposite);
    }
    SUBCASE("composite must carry components and atomics must not") {
        instr.components = {};
        CHECK_THROWS_AS(instr.validate(), std::invalid_argument);
        Instruction atomic = atomic_instruction(MotionClass::PanLeft);
        atomic.components = {MotionClass::DollyIn};
        CHECK_THROWS_AS(atomic.validate(), std::invalid_argument);
    }
    SUBCASE("magnitude bounds are enforced") {
        Instruction bad = atomic_instruction(MotionClass::DollyIn);
        bad.magnitude = 100.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
    SUBCASE("distinct axes are accepted") {
        instr.components = {MotionClass::DollyIn, MotionClass::PanLeft, MotionClass::TiltDown};
        CHECK_NOTHROW(instr.validate());
    }
}

TEST_CASE("encode_condition") {
    const SceneStub scene = SceneStub::from_seed(5, kDefaultSceneFeatureWidth);
    SUBCASE("deterministic and fixed width for every class") {
        for (int c = 0; c < kMotionClassCount; ++c) {
            Rng rng(300 + static_cast<std::uint64_t>(c));
            const Instruction instr = sample_instruction(static_cast<MotionClass>(c), rng);
            const auto v1 = encode_condition(instr, scene);
            const auto v2 = encode_condition(instr, scene);
            CHECK(v1 == v2);
            CHECK(static_cast<int>(v1.size()) == kDefaultCondDim);
        }
    }
    SUBCASE("dolly_in and dolly_out differ exactly in the class slots") {
        const auto vin = encode_condition(atomic_instruction(MotionClass::DollyIn), scene);
        const auto vout = encode_condition(atomic_instruction(MotionClass::DollyOut), scene);
        for (size_t i = 0; i < vin.size(); ++i) {
            if (i == static_cast<size_t>(MotionClass::DollyIn) ||
                i == static_cast<size_t>(MotionClass::DollyOut))
                CHECK(vin[i] != vout[i]);
            else
                CHECK(vin[i] == vout[i]);
        }
    }
}

TEST_CASE("scene stub is deterministic and bounded") {
    for (std::uint64_t seed : {1ull, 99ull, 123456789ull}) {
        const SceneStub a = SceneStub::from_seed(seed, kDefaultSceneFeatureWidth);
        const SceneStub b = SceneStub::from_seed(seed, kDefaultSceneFeatureWidth);
        CHECK(a.feature == b.feature);
        CHECK(a.depth_scale == b.depth_scale);
        CHECK(a.depth_scale >= 0.5);
        CHECK(a.depth_scale <= 2.0);
        CHECK(a.feature[0] == doctest::Approx(std::log2(a.depth_scale)).epsilon(1e-15));
    }
}

TEST_CASE("build_dataset") {
    DatasetSpec spec;
    spec.per_class = 2;
    spec.traj_len = 13;
    spec.seed = 5;

    const std::string text = build_dataset_text(spec);
    SUBCASE("exact class balance") {
        const auto records = parse_dataset_text(text);
        CHECK(records.size() == 18);
        std::map<std::string, int> counts;
        for (const auto& r : records) counts[to_string(r.instruction.motion_class)]++;
        for (const auto& [cls, n] : counts) CHECK(n == 2);
    }
    SUBCASE("rerun is byte-identical") { CHECK(build_dataset_text(spec) == text); }
    SUBCASE("schema round trip and record validity") {
        const auto records = parse_dataset_text(text);
        for (const auto& rec : records) {
            CHECK(rec.traj.rows() == 13);
            CHECK(rec.traj.cols() == 12);
            CHECK(rec.traj.all_finite());
            CHECK(!rec.id.empty());
            CHECK((rec.instruction.motion_class == MotionClass::Composite) ==
                  !rec.instruction.components.empty());
            // trajectory satisfies the motion filters it was built under
            const Trajectory traj = unflatten(FlatTrajectory(rec.traj), rec.dt);
            CHECK(validate_motion(traj, 0.01, 1e9) == MotionVerdict::Ok);
            const SceneStub scene = SceneStub::from_seed(rec.scene_seed, kDefaultSceneFeatureWidth);
            CHECK(check_lipschitz(traj, generator_step_bound(rec.instruction, scene, 13, rec.dt)).pass);
            // serialize -> parse -> serialize is stable
            CHECK(serialize_record(parse_record(serialize_record(rec))) == serialize_record(rec));
        }
    }
    SUBCASE("different seed changes the data") {
        DatasetSpec other = spec;
        other.seed = 6;
        CHECK(build_dataset_text(other) != text);
    }
}

TEST_SUITE_END();
