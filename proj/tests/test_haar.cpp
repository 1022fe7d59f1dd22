#include <doctest.h>

#include <cmath>

#include "camtraj/haar.hpp"
#include "test_helpers.hpp"

using namespace camtraj;
using camtraj::testing::random_mat;

TEST_SUITE_BEGIN("haar-dwt");

namespace {
Mat column(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Mat(n, 1, std::move(v));
}
}  // namespace

TEST_CASE("dwt_level hand-computed case [1,3,2,2]") {
    const auto [a, d] = dwt_level(column({1, 3, 2, 2}));
    REQUIRE(a.rows() == 2);
    CHECK(a(0, 0) == doctest::Approx(2.8284271247461903).epsilon(1e-14));
    CHECK(a(1, 0) == doctest::Approx(2.8284271247461903).epsilon(1e-14));
    CHECK(d(0, 0) == doctest::Approx(-1.4142135623730951).epsilon(1e-14));
    CHECK(d(1, 0) == 0.0);
}

TEST_CASE("dwt_level constant input") {
    const auto [a, d] = dwt_level(column({3.5, 3.5, 3.5, 3.5, 3.5, 3.5}));
    for (int i = 0; i < a.rows(); ++i) {
        CHECK(a(i, 0) == doctest::Approx(3.5 * std::sqrt(2.0)).epsilon(1e-15));
        CHECK(d(i, 0) == 0.0);
    }
}

TEST_CASE("dwt_level rejects odd length") {
    CHECK_THROWS_AS(dwt_level(column({1, 2, 3})), OddLength);
}

TEST_CASE("dwt_multi shapes with padding, T=13 L=3") {
    Rng rng(3);
    const Mat x = random_mat(rng, 13, 12);
    const WaveletPyramid p = dwt_multi(x, 3);
    CHECK(p.pad.left + 13 + p.pad.right == 16);
    CHECK(p.approx.rows() == 2);
    REQUIRE(p.details.size() == 3);
    CHECK(p.details[0].rows() == 2);  // coarsest, level 3
    CHECK(p.details[1].rows() == 4);
    CHECK(p.details[2].rows() == 8);  // finest, level 1
    CHECK(p.padded_length() == 16);
}

TEST_CASE("dwt_multi single level without padding matches dwt_level") {
    Rng rng(5);
    Mat x = random_mat(rng, 16, 3);
    x(0, 0) = 1;
    x(1, 0) = 3;
    x(2, 0) = 2;
    x(3, 0) = 2;
    const WaveletPyramid p = dwt_multi(x, 1);
    const auto [a, d] = dwt_level(x);
    CHECK(p.pad.left == 0);
    CHECK(p.pad.right == 0);
    CHECK(max_abs_diff(p.approx, a) == 0.0);
    CHECK(max_abs_diff(p.details[0], d) == 0.0);
}

TEST_CASE("constant input has zero details at every level") {
    Mat x(10, 2);
    for (double& v : x.data()) v = -0.75;
    const WaveletPyramid p = dwt_multi(x, 3);
    for (const Mat& d : p.details)
        for (double v : d.data()) CHECK(v == 0.0);
}

TEST_CASE("idwt reconstructs exactly") {
    SUBCASE("hand case") {
        const Mat x = column({1, 3, 2, 2});
        const Mat back = idwt(dwt_multi(x, 1));
        CHECK(max_abs_diff(back, x) < 1e-15);
    }
    SUBCASE("random matrices, padded and unpadded") {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            Rng rng(seed);
            const int length = 2 + static_cast<int>(rng.bounded(40));
            const int levels = 1 + static_cast<int>(rng.bounded(4));
            const Mat x = random_mat(rng, length, 1 + static_cast<int>(rng.bounded(12)));
            const Mat back = idwt(dwt_multi(x, levels));
            REQUIRE(back.rows() == x.rows());
            CHECK(max_abs_diff(back, x) < 1e-12);
        }
    }
    SUBCASE("constant signal with zeroed details") {
        Mat x(7, 1);
        for (double& v : x.data()) v = 4.25;
        const Mat low = lowpass_reconstruct(dwt_multi(x, 2));
        CHECK(max_abs_diff(low, x) < 1e-13);
    }
}

TEST_CASE("idwt rejects inconsistent pyramids") {
    Rng rng(9);
    WaveletPyramid p = dwt_multi(random_mat(rng, 8, 2), 2);
    p.details[1] = Mat(3, 2);
    CHECK_THROWS_AS(idwt(p), InconsistentPyramid);

    WaveletPyramid q = dwt_multi(random_mat(rng, 8, 2), 2);
    q.levels = 3;
    CHECK_THROWS_AS(idwt(q), InconsistentPyramid);
}

TEST_CASE("energy_split hand case and Parseval") {
    SUBCASE("[1,3,2,2] splits 18 = 16 + 2") {
        const EnergySplit e = energy_split(dwt_multi(column({1, 3, 2, 2}), 1));
        CHECK(e.approx_energy == doctest::Approx(16.0).epsilon(1e-14));
        CHECK(e.detail_energies[0] == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(e.total == doctest::Approx(18.0).epsilon(1e-14));
    }
    SUBCASE("zero signal") {
        const EnergySplit e = energy_split(dwt_multi(Mat(8, 3), 2));
        CHECK(e.approx_energy == 0.0);
        CHECK(e.total == 0.0);
    }
    SUBCASE("Parseval on unpadded length") {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            Rng rng(seed);
            const Mat x = random_mat(rng, 16, 12);
            const EnergySplit e = energy_split(dwt_multi(x, 3));
            const double ref = x.frob2();
            CHECK(std::abs(e.total - ref) / ref < 1e-12);
        }
    }
}

TEST_CASE("linearity of the transform") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat x = random_mat(rng, 11, 4);
        const Mat y = random_mat(rng, 11, 4);
        const double alpha = rng.uniform(-2, 2), beta = rng.uniform(-2, 2);
        Mat combo(11, 4);
        for (size_t i = 0; i < combo.size(); ++i)
            combo.data()[i] = alpha * x.data()[i] + beta * y.data()[i];
        const WaveletPyramid pc = dwt_multi(combo, 2);
        const WaveletPyramid px = dwt_multi(x, 2);
        const WaveletPyramid py = dwt_multi(y, 2);
        CHECK(max_abs_diff(pc.approx, alpha * px.approx + beta * py.approx) < 1e-12);
        for (size_t l = 0; l < pc.details.size(); ++l)
            CHECK(max_abs_diff(pc.details[l], alpha * px.details[l] + beta * py.details[l]) < 1e-12);
    }
}

TEST_CASE("shifting a constant signal moves only the approx band") {
    Mat x(12, 1);
    for (double& v : x.data()) v = 1.5;
    Mat y(12, 1);
    for (double& v : y.data()) v = 9.0;
    const WaveletPyramid px = dwt_multi(x, 2);
    const WaveletPyramid py = dwt_multi(y, 2);
    for (size_t l = 0; l < px.details.size(); ++l) {
        for (double v : px.details[l].data()) CHECK(v == 0.0);
        for (double v : py.details[l].data()) CHECK(v == 0.0);
    }
    CHECK(max_abs_diff(px.approx, py.approx) > 1.0);
}

TEST_CASE("lowpass reconstruction of a ramp beats equal-energy noise") {
    const int length = 32;
    Mat ramp(length, 1);
    for (int t = 0; t < length; ++t) ramp(t, 0) = t / static_cast<double>(length - 1);
    // remove mean so the comparison is about shape, not offset
    double mean = 0;
    for (double v : ramp.data()) mean += v;
    mean /= length;
    for (double& v : ramp.data()) v -= mean;

    Rng rng(23);
    Mat noise(length, 1);
    for (double& v : noise.data()) v = rng.normal();
    double nmean = 0;
    for (double v : noise.data()) nmean += v;
    nmean /= length;
    for (double& v : noise.data()) v -= nmean;
    const double scale = std::sqrt(ramp.frob2() / noise.frob2());
    for (double& v : noise.data()) v *= scale;

    auto lp_err = [](const Mat& x) {
        const Mat low = lowpass_reconstruct(dwt_multi(x, 3));
        double e = 0;
        for (int t = 0; t < x.rows(); ++t) e += (x(t, 0) - low(t, 0)) * (x(t, 0) - low(t, 0));
        return e;
    };
    CHECK(lp_err(ramp) < lp_err(noise));
}

TEST_CASE("reflect padding stays within signal values and is right-heavy") {
    const Mat x = column({1, 2, 3});
    const WaveletPyramid p = dwt_multi(x, 2);  // T_pad = 4, pad 1 total
    CHECK(p.pad.left == 0);
    CHECK(p.pad.right == 1);

    const PadSpec spec{3, 3};
    const Mat padded = reflect_pad(column({10, 20}), spec);
    // period-2 reflection of [10, 20]: 20 10 20 | 10 20 | 10 20 10
    const double want[] = {20, 10, 20, 10, 20, 10, 20, 10};
    for (int i = 0; i < padded.rows(); ++i) CHECK(padded(i, 0) == want[i]);
}

TEST_SUITE_END();
