#include <doctest.h>

#include <cmath>

#include "camtraj/losses.hpp"
#include "test_helpers.hpp"

using namespace camtraj;
using camtraj::testing::random_mat;

TEST_SUITE_BEGIN("losses");

TEST_CASE("WavRegConfig enforces the weight ordering") {
    CHECK_NOTHROW(WavRegConfig::defaults());
    CHECK_NOTHROW(WavRegConfig(1, 2.0, {0.0}, 0.1));  // low-band-only extreme
    CHECK_THROWS_AS(WavRegConfig(3, 2.0, {1.0, 1.0, 0.5}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(WavRegConfig(3, 0.5, {1.0, 0.5, 0.25}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(WavRegConfig(2, 2.0, {1.0}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(WavRegConfig(1, 2.0, {1.0}, -0.5), std::invalid_argument);
    CHECK_THROWS_AS(WavRegConfig(0, 2.0, {}, 0.1), std::invalid_argument);
}

TEST_CASE("wavreg hand-computed cases") {
    SUBCASE("identical inputs cost nothing") {
        Rng rng(1);
        const Mat x = random_mat(rng, 8, 3);
        CHECK(wavreg(x, x, WavRegConfig::defaults()).value == 0.0);
    }
    SUBCASE("T=2 single level equals 2*sqrt(2)") {
        Mat pred(2, 1, {1, 1});
        Mat target(2, 1, {0, 0});
        const WavRegValue v = wavreg(pred, target, WavRegConfig(1, 2.0, {1.0}, 0.1));
        CHECK(v.value == doctest::Approx(2.8284271247461903).epsilon(1e-14));
        CHECK(v.per_band[0] == doctest::Approx(2.8284271247461903).epsilon(1e-14));
        CHECK(v.per_band[1] == 0.0);
    }
    SUBCASE("zero detail weights match a low-band-only oracle") {
        Rng rng(2);
        const Mat pred = random_mat(rng, 8, 2);
        const Mat target = random_mat(rng, 8, 2);
        const WavRegValue v = wavreg(pred, target, WavRegConfig(1, 2.0, {0.0}, 0.1));
        const auto [pa, pd] = dwt_level(pred);
        const auto [ta, td] = dwt_level(target);
        double oracle = 0.0;
        for (size_t i = 0; i < pa.size(); ++i) oracle += 2.0 * std::abs(pa.data()[i] - ta.data()[i]);
        CHECK(v.value == doctest::Approx(oracle).epsilon(1e-14));
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(wavreg(Mat(4, 2), Mat(4, 3), WavRegConfig::defaults()), ShapeMismatch);
    }
}

TEST_CASE("wavreg metric-like properties") {
    Rng rng(3);
    const WavRegConfig cfg = WavRegConfig::defaults();
    for (int trial = 0; trial < 25; ++trial) {
        const Mat x = random_mat(rng, 13, 4);
        const Mat y = random_mat(rng, 13, 4);
        const Mat z = random_mat(rng, 13, 4);
        const double xy = wavreg(x, y, cfg).value;
        const double yx = wavreg(y, x, cfg).value;
        CHECK(xy == doctest::Approx(yx).epsilon(1e-14));
        CHECK(xy >= 0.0);
        CHECK(wavreg(x, z, cfg).value <= xy + wavreg(y, z, cfg).value + 1e-9);

        const double alpha = rng.uniform(-3.0, 3.0);
        const double scaled = wavreg(alpha * x, alpha * y, cfg).value;
        CHECK(scaled == doctest::Approx(std::abs(alpha) * xy).epsilon(1e-12));
    }
}

TEST_CASE("total_loss") {
    CHECK(total_loss(1.0, 2.0, 0.1) == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(total_loss(3.25, 99.0, 0.0) == 3.25);  // beta = 0 disables the wavelet term
    CHECK_THROWS_AS(total_loss(std::nan(""), 0.0, 0.1), std::invalid_argument);
}

TEST_CASE("difference regularizers") {
    Mat constant(5, 2);
    for (double& v : constant.data()) v = 3.0;
    CHECK(velreg(constant) == 0.0);

    CHECK(velreg(Mat(3, 1, {0, 1, 3})) == doctest::Approx(5.0).epsilon(1e-15));

    Mat ramp(6, 1);
    for (int t = 0; t < 6; ++t) ramp(t, 0) = 0.5 * t;
    CHECK(accreg(ramp) == doctest::Approx(0.0).epsilon(1e-18));
    CHECK(jerk(ramp) == doctest::Approx(0.0).epsilon(1e-18));

    CHECK_THROWS_AS(velreg(Mat(1, 2)), TooShort);
    CHECK_THROWS_AS(accreg(Mat(2, 2)), TooShort);
    CHECK_THROWS_AS(jerk(Mat(3, 2)), TooShort);
}

TEST_CASE("lowpass_reg") {
    Mat constant(8, 1);
    for (double& v : constant.data()) v = -1.25;
    CHECK(lowpass_reg(constant, 0.5) == 0.0);

    Mat nyquist(8, 1);
    for (int t = 0; t < 8; ++t) nyquist(t, 0) = (t % 2 == 0) ? 1.0 : -1.0;
    CHECK(lowpass_reg(nyquist, 0.5) == doctest::Approx(8.0).epsilon(1e-12));

    Mat shifted = nyquist;
    for (double& v : shifted.data()) v += 100.0;
    CHECK(lowpass_reg(shifted, 0.5) == doctest::Approx(lowpass_reg(nyquist, 0.5)).epsilon(1e-9));
}

TEST_CASE("grad_ratio") {
    const std::vector<double> g = {3.0, -4.0};
    CHECK(grad_ratio(g, g, 0.0) == 0.0);
    CHECK(grad_ratio(g, g, 0.3) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK_THROWS_AS(grad_ratio({0.0, 0.0}, g, 0.1), ZeroBaseGradient);

    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> gd(8), gw(8);
        for (double& v : gd) v = rng.normal();
        for (double& v : gw) v = rng.normal();
        const double beta = std::abs(rng.normal()) + 0.01;
        const double r1 = grad_ratio(gd, gw, beta);
        const double r2 = grad_ratio(gd, gw, 2.0 * beta);
        CHECK(r2 == doctest::Approx(2.0 * r1).epsilon(1e-15));  // linear in beta to one ulp
    }
}

TEST_CASE("angle_diagnostic") {
    SUBCASE("two-dimensional hand case") {
        const AngleDiagnostic d = angle_diagnostic({1, 0}, {0, 1}, 0.5);
        CHECK(d.ratio == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(d.sin_phi == doctest::Approx(0.4472135954999579).epsilon(1e-12));
        CHECK(d.bounded);
        CHECK(d.bound == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(d.sin_phi <= d.bound);
    }
    SUBCASE("collinear gradients") {
        const AngleDiagnostic d = angle_diagnostic({2, 2}, {1, 1}, 0.25);
        CHECK(d.sin_phi == doctest::Approx(0.0).epsilon(1e-15));
    }
    SUBCASE("ratio at or above one is unbounded but still reported") {
        const AngleDiagnostic d = angle_diagnostic({1, 0}, {0, 3}, 1.0);
        CHECK_FALSE(d.bounded);
        CHECK(std::isinf(d.bound));
        CHECK(d.sin_phi > 0.0);
    }
}

TEST_CASE("deviation angle bound holds empirically") {
    Rng rng(6);
    int checked = 0;
    while (checked < 1000) {
        std::vector<double> gd(16), gw(16);
        for (double& v : gd) v = rng.normal();
        for (double& v : gw) v = rng.normal();
        const double beta = rng.uniform(0.0, 2.0);
        const double r = grad_ratio(gd, gw, beta);
        if (r >= 1.0) continue;
        const AngleDiagnostic d = angle_diagnostic(gd, gw, beta);
        CHECK(d.sin_phi <= d.bound + 1e-12);
        ++checked;
    }
}

TEST_CASE("tape losses match their direct implementations and finite differences") {
    Rng rng(8);
    const int length = 16, channels = 12;
    const WavRegConfig cfg = WavRegConfig::defaults();
    for (int trial = 0; trial < 3; ++trial) {
        const Mat pred = random_mat(rng, length, channels);
        const Mat target = random_mat(rng, length, channels);

        {
            Tape tape;
            Tensor x = tape.leaf(pred, false);
            const WavRegNodes nodes = wavreg_node(tape, x, target, cfg);
            CHECK(nodes.value.value()[0] ==
                  doctest::Approx(wavreg(pred, target, cfg).value).epsilon(1e-12));

            Tensor v = velreg_node(tape.leaf(pred, false));
            CHECK(v.value()[0] == doctest::Approx(velreg(pred)).epsilon(1e-12));
            Tensor a = accreg_node(tape.leaf(pred, false));
            CHECK(a.value()[0] == doctest::Approx(accreg(pred)).epsilon(1e-12));
            Tensor j = jerk_node(tape.leaf(pred, false));
            CHECK(j.value()[0] == doctest::Approx(jerk(pred)).epsilon(1e-12));
            Tensor lp = lowpass_reg_node(tape, tape.leaf(pred, false), 0.5);
            CHECK(lp.value()[0] == doctest::Approx(lowpass_reg(pred, 0.5)).epsilon(1e-10));
        }

        const Shape shape{length, channels};
        const double tol = 1e-5;
        CHECK(finite_diff_check(
                  [&](Tape& t, Tensor x) { return wavreg_node(t, x, target, cfg).value; }, shape,
                  pred.data()) < tol);
        CHECK(finite_diff_check([&](Tape&, Tensor x) { return velreg_node(x); }, shape,
                                pred.data()) < tol);
        CHECK(finite_diff_check([&](Tape&, Tensor x) { return accreg_node(x); }, shape,
                                pred.data()) < tol);
        CHECK(finite_diff_check([&](Tape&, Tensor x) { return jerk_node(x); }, shape,
                                pred.data()) < tol);
        CHECK(finite_diff_check([&](Tape& t, Tensor x) { return lowpass_reg_node(t, x, 0.5); },
                                shape, pred.data()) < tol);
    }
}

TEST_SUITE_END();
