#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "camtraj/mat.hpp"

namespace camtraj {

struct OddLength : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TooShort : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InconsistentPyramid : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;

// Symmetric reflection without edge repetition, multi-bounce, so pads may
// exceed the signal length. Period 2T-2.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    int j = i % period;
    if (j < 0) j += period;
    if (j >= n) j = period - j;
    return j;
}
}  // namespace detail

struct PadSpec {
    int left = 0;
    int right = 0;
};

// Multi-level orthonormal Haar decomposition of a T x C signal.
// details[0] is the coarsest band (level L), details.back() the finest.
struct WaveletPyramid {
    Mat approx;
    std::vector<Mat> details;  // coarse -> fine
    int levels = 0;
    int original_length = 0;
    PadSpec pad;

    int padded_length() const {
        int t = approx.rows();
        for (auto it = details.begin(); it != details.end(); ++it) t += it->rows();
        return t;
    }
};

// One Haar analysis step: pairwise scaled sums and differences.
inline std::pair<Mat, Mat> dwt_level(const Mat& x) {
    if (x.rows() % 2 != 0)
        throw OddLength("dwt_level: length " + std::to_string(x.rows()) + " is odd; pad first");
    const int half = x.rows() / 2;
    Mat approx(half, x.cols());
    Mat detail(half, x.cols());
    for (int l = 0; l < half; ++l)
        for (int c = 0; c < x.cols(); ++c) {
            const double a = x(2 * l, c);
            const double b = x(2 * l + 1, c);
            approx(l, c) = (a + b) * detail::kInvSqrt2;
            detail(l, c) = (a - b) * detail::kInvSqrt2;
        }
    return {std::move(approx), std::move(detail)};
}

inline int padded_length_for(int length, int levels) {
    const int block = 1 << levels;
    return ((length + block - 1) / block) * block;
}

inline PadSpec pad_spec_for(int length, int levels) {
    const int pad = padded_length_for(length, levels) - length;
    PadSpec s;
    s.left = pad / 2;
    s.right = pad - s.left;  // right-heavy when odd
    return s;
}

inline Mat reflect_pad(const Mat& x, const PadSpec& pad) {
    Mat out(pad.left + x.rows() + pad.right, x.cols());
    for (int r = 0; r < out.rows(); ++r) {
        const int src = detail::reflect_index(r - pad.left, x.rows());
        for (int c = 0; c < x.cols(); ++c) out(r, c) = x(src, c);
    }
    return out;
}

// Reflect-pad once to a multiple of 2^levels, then apply dwt_level
// recursively to the approximation.
inline WaveletPyramid dwt_multi(const Mat& x, int levels) {
    if (levels < 1) throw std::invalid_argument("dwt_multi: levels must be >= 1");
    if (x.rows() < 2) throw TooShort("dwt_multi: need at least 2 samples");
    if (levels > 24) throw TooShort("dwt_multi: level count too large");

    WaveletPyramid p;
    p.levels = levels;
    p.original_length = x.rows();
    p.pad = pad_spec_for(x.rows(), levels);
    if (padded_length_for(x.rows(), levels) >> levels < 1)
        throw TooShort("dwt_multi: padded length shorter than one coefficient per band");

    Mat cur = reflect_pad(x, p.pad);
    std::vector<Mat> fine_to_coarse;
    for (int l = 0; l < levels; ++l) {
        auto [a, d] = dwt_level(cur);
        fine_to_coarse.push_back(std::move(d));
        cur = std::move(a);
    }
    p.approx = std::move(cur);
    p.details.assign(fine_to_coarse.rbegin(), fine_to_coarse.rend());
    return p;
}

// Exact inverse: rebuild the padded signal, then crop to original_length.
inline Mat idwt(const WaveletPyramid& p) {
    if (p.levels != static_cast<int>(p.details.size()))
        throw InconsistentPyramid("idwt: level count does not match detail bands");
    Mat cur = p.approx;
    for (const Mat& d : p.details) {
        if (d.rows() != cur.rows() || d.cols() != cur.cols())
            throw InconsistentPyramid("idwt: band shape mismatch at reconstruction");
        Mat up(cur.rows() * 2, cur.cols());
        for (int l = 0; l < cur.rows(); ++l)
            for (int c = 0; c < cur.cols(); ++c) {
                up(2 * l, c) = (cur(l, c) + d(l, c)) * detail::kInvSqrt2;
                up(2 * l + 1, c) = (cur(l, c) - d(l, c)) * detail::kInvSqrt2;
            }
        cur = std::move(up);
    }
    if (cur.rows() != p.pad.left + p.original_length + p.pad.right)
        throw InconsistentPyramid("idwt: reconstructed length mismatch");
    return cur.row_range(p.pad.left, p.pad.left + p.original_length);
}

struct EnergySplit {
    double approx_energy = 0.0;
    std::vector<double> detail_energies;  // coarse -> fine, matching details
    double total = 0.0;
};

inline EnergySplit energy_split(const WaveletPyramid& p) {
    EnergySplit e;
    e.approx_energy = p.approx.frob2();
    e.total = e.approx_energy;
    for (const Mat& d : p.details) {
        e.detail_energies.push_back(d.frob2());
        e.total += e.detail_energies.back();
    }
    return e;
}

// Approximation-only reconstruction: all detail bands zeroed.
inline Mat lowpass_reconstruct(const WaveletPyramid& p) {
    WaveletPyramid q = p;
    for (Mat& d : q.details)
        for (double& v : d.data()) v = 0.0;
    return idwt(q);
}

}  // namespace camtraj
