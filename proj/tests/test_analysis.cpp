#include <doctest.h>

#include <cmath>

#include "camtraj/analysis.hpp"
#include "camtraj/taskgen.hpp"
#include "test_helpers.hpp"

using namespace camtraj;
using camtraj::testing::random_mat;

TEST_SUITE_BEGIN("analysis");

namespace {
Trajectory constant_trajectory(int length) {
    return Trajectory(std::vector<Pose>(static_cast<size_t>(length)), 1.0);
}

Trajectory uniform_dolly(int length, double step, double dt = 1.0) {
    std::vector<Pose> poses;
    for (int t = 0; t < length; ++t) {
        Pose p;
        p.translation = {0, 0, -step * t};  // extrinsic translation; |delta| = step
        poses.push_back(p);
    }
    return Trajectory(std::move(poses), dt);
}
}  // namespace

TEST_CASE("kinematics closed forms") {
    SUBCASE("constant trajectory") {
        const Kinematics k = kinematics(constant_trajectory(6));
        for (double v : k.angular_speed) CHECK(v == 0.0);
        for (double v : k.linear_speed) CHECK(v == 0.0);
    }
    SUBCASE("uniform dolly at 0.1 per step") {
        const Kinematics k = kinematics(uniform_dolly(8, 0.1));
        for (double v : k.linear_speed) CHECK(v == doctest::Approx(0.1).epsilon(1e-12));
        for (double v : k.angular_speed) CHECK(v == 0.0);
    }
    SUBCASE("uniform pan of 2 degrees per step") {
        const double two_deg = 2.0 * 3.14159265358979323846 / 180.0;
        std::vector<Pose> poses;
        for (int t = 0; t < 8; ++t) {
            Pose p;
            p.rotation = rot_about_y(two_deg * t);
            poses.push_back(p);
        }
        const Kinematics k = kinematics(Trajectory(std::move(poses), 1.0));
        for (double v : k.angular_speed) CHECK(v == doctest::Approx(0.0349066).epsilon(1e-5));
    }
}

TEST_CASE("motion_energy") {
    CHECK(motion_energy(constant_trajectory(5)) == 0.0);
    // linear speed 1 per step, T=5 -> 4 steps
    CHECK(motion_energy(uniform_dolly(5, 1.0)) == doctest::Approx(4.0).epsilon(1e-12));
    // scaling translations by 2 quadruples the translational energy
    const double base = motion_energy(uniform_dolly(7, 0.3));
    const double scaled = motion_energy(uniform_dolly(7, 0.6));
    CHECK(scaled == doctest::Approx(4.0 * base).epsilon(1e-12));
}

TEST_CASE("motion_energy never increases when appending zero motion") {
    Rng rng(13);
    const Trajectory traj = camtraj::testing::random_trajectory(rng, 6);
    std::vector<Pose> extended = traj.poses();
    extended.push_back(extended.back());
    extended.push_back(extended.back());
    const Trajectory longer(std::move(extended), traj.frame_interval());
    CHECK(motion_energy(longer) <= motion_energy(traj) + 1e-15);
}

TEST_CASE("hf_energy spectral cases") {
    SUBCASE("constant signal") {
        Mat x(8, 2);
        for (double& v : x.data()) v = 2.5;
        CHECK(hf_energy(x, 0.25) == 0.0);
        CHECK(hf_energy(x, 0.9) == 0.0);
    }
    SUBCASE("Nyquist tone carries the full AC energy") {
        Mat x(8, 1);
        for (int t = 0; t < 8; ++t) x(t, 0) = (t % 2 == 0) ? 1.0 : -1.0;
        CHECK(hf_energy(x, 0.5) == doctest::Approx(8.0).epsilon(1e-12));
    }
    SUBCASE("cutoff at 1 selects nothing") {
        Rng rng(5);
        const Mat x = random_mat(rng, 12, 3);
        CHECK(hf_energy(x, 1.0) == 0.0);
    }
    SUBCASE("additive over channels and invariant to mean shifts") {
        Rng rng(7);
        const Mat a = random_mat(rng, 10, 1);
        const Mat b = random_mat(rng, 10, 1);
        Mat ab(10, 2);
        Mat b_shifted = b;
        for (double& v : b_shifted.data()) v += 17.5;
        for (int t = 0; t < 10; ++t) {
            ab(t, 0) = a(t, 0);
            ab(t, 1) = b_shifted(t, 0);
        }
        const double together = hf_energy(ab, 0.4);
        const double apart = hf_energy(a, 0.4) + hf_energy(b, 0.4);
        CHECK(together == doctest::Approx(apart).epsilon(1e-10));
    }
}

TEST_CASE("full DFT energy accounting (Parseval with DC removed)") {
    Rng rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        Mat x = random_mat(rng, 9 + trial, 2);
        // remove per-channel mean so all energy is AC
        for (int c = 0; c < x.cols(); ++c) {
            double mean = 0;
            for (int t = 0; t < x.rows(); ++t) mean += x(t, c);
            mean /= x.rows();
            for (int t = 0; t < x.rows(); ++t) x(t, c) -= mean;
        }
        // tiny positive cutoff selects every non-DC bin
        CHECK(hf_energy(x, 1e-9) == doctest::Approx(x.frob2()).epsilon(1e-10));
    }
}

TEST_CASE("analyze assembles the report") {
    SUBCASE("constant trajectory") {
        const AnalysisReport rep = analyze(constant_trajectory(13));
        CHECK(rep.lf_fraction == 1.0);
        CHECK(rep.lowpass_error == doctest::Approx(0.0).epsilon(1e-13));
        CHECK(rep.hf_energy == doctest::Approx(0.0).epsilon(1e-18));
        CHECK(rep.accel_energy == 0.0);
        CHECK(rep.max_step == 0.0);
    }
    SUBCASE("synthetic dolly is low-frequency dominated") {
        Instruction instr;
        instr.motion_class = MotionClass::DollyIn;
        instr.magnitude = 1.2;
        const SceneStub scene = SceneStub::from_seed(3, kDefaultSceneFeatureWidth);
        const Trajectory traj = generate_trajectory(instr, scene, 13, 3);
        const AnalysisReport rep = analyze(traj);
        CHECK(rep.lf_fraction > 0.9);
    }
    SUBCASE("added noise degrades both lowpass error and lf fraction") {
        Instruction instr;
        instr.motion_class = MotionClass::DollyIn;
        instr.magnitude = 1.2;
        const SceneStub scene = SceneStub::from_seed(4, kDefaultSceneFeatureWidth);
        const Trajectory clean = generate_trajectory(instr, scene, 13, 4);
        const AnalysisReport clean_rep = analyze(clean);

        Rng rng(4);
        Mat noisy = flatten(clean).values;
        for (int t = 0; t < noisy.rows(); ++t)
            for (int c = 0; c < noisy.cols(); ++c) noisy(t, c) += 0.1 * rng.normal() * 0.1;
        // classify via flat matrix analysis: rebuild a trajectory via projection
        const Trajectory noisy_traj = unflatten(FlatTrajectory(noisy), 1.0);
        const AnalysisReport noisy_rep = analyze(noisy_traj);
        CHECK(noisy_rep.lowpass_error > clean_rep.lowpass_error);
        CHECK(noisy_rep.lf_fraction < clean_rep.lf_fraction);
    }
}

TEST_CASE("lowpass keeps the best low-band approximation") {
    Rng rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        const Mat x = random_mat(rng, 16, 4);  // divisible by 2^3: exact Parseval
        const WaveletPyramid p = dwt_multi(x, 3);

        auto recon_err = [&](bool zero_approx) {
            WaveletPyramid q = p;
            for (Mat& d : q.details)
                for (double& v : d.data()) v = 0.0;
            if (zero_approx)
                for (double& v : q.approx.data()) v = 0.0;
            const Mat rec = idwt(q);
            double e = 0;
            for (size_t i = 0; i < x.size(); ++i)
                e += (x.data()[i] - rec.data()[i]) * (x.data()[i] - rec.data()[i]);
            return e;
        };
        CHECK(recon_err(false) <= recon_err(true) + 1e-12);
    }
}

TEST_SUITE_END();
