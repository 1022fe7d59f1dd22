#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "camtraj/analysis.hpp"
#include "camtraj/haar.hpp"
#include "camtraj/mat.hpp"
#include "camtraj/tensor.hpp"

namespace camtraj {

struct ZeroBaseGradient : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Scale weights for the wavelet-matching loss. Construction enforces the
// strictly decreasing chain lambda_a > lambda_{d_L} > ... > lambda_{d_1} >= 0;
// weight_details is ordered coarse -> fine to match WaveletPyramid.
struct WavRegConfig {
    int levels;
    double weight_approx;
    std::vector<double> weight_details;
    double beta;

    WavRegConfig(int levels_, double weight_approx_, std::vector<double> weight_details_,
                 double beta_)
        : levels(levels_),
          weight_approx(weight_approx_),
          weight_details(std::move(weight_details_)),
          beta(beta_) {
        if (levels < 1) throw std::invalid_argument("WavRegConfig: levels must be >= 1");
        if (static_cast<int>(weight_details.size()) != levels)
            throw std::invalid_argument("WavRegConfig: need exactly one detail weight per level");
        if (beta < 0.0) throw std::invalid_argument("WavRegConfig: beta must be >= 0");
        double prev = weight_approx;
        for (double w : weight_details) {
            if (!(prev > w))
                throw std::invalid_argument(
                    "WavRegConfig: weights must decrease strictly from approx to finest detail");
            prev = w;
        }
        if (weight_details.back() < 0.0)
            throw std::invalid_argument("WavRegConfig: detail weights must be >= 0");
    }

    static WavRegConfig defaults() { return WavRegConfig(3, 2.0, {1.0, 0.5, 0.25}, 0.1); }
};

struct LossReport {
    double diff = 0.0;
    double wav = 0.0;
    double total = 0.0;
    std::vector<double> per_band;  // approx term first, then details coarse -> fine
};

struct WavRegValue {
    double value = 0.0;
    std::vector<double> per_band;
};

namespace detail {
inline double l1_diff(const Mat& a, const Mat& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
    return s;
}
}  // namespace detail

// Weighted L1 match of wavelet coefficients, both inputs decomposed with
// identical padding. Sums (not averages) over coefficients and channels.
inline WavRegValue wavreg(const Mat& pred, const Mat& target, const WavRegConfig& cfg) {
    if (!pred.same_shape(target))
        throw ShapeMismatch("wavreg: pred " + std::to_string(pred.rows()) + "x" +
                            std::to_string(pred.cols()) + " vs target " +
                            std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
    const WaveletPyramid pp = dwt_multi(pred, cfg.levels);
    const WaveletPyramid tp = dwt_multi(target, cfg.levels);
    WavRegValue out;
    out.per_band.push_back(cfg.weight_approx * detail::l1_diff(pp.approx, tp.approx));
    for (int l = 0; l < cfg.levels; ++l)
        out.per_band.push_back(cfg.weight_details[static_cast<size_t>(l)] *
                               detail::l1_diff(pp.details[static_cast<size_t>(l)],
                                               tp.details[static_cast<size_t>(l)]));
    for (double v : out.per_band) out.value += v;
    return out;
}

// Per-band mean variant used by the training objective: each band's L1 is
// divided by its coefficient count, keeping beta on a coefficient scale so
// the wavelet gradient stays a bounded perturbation of the diffusion
// gradient rather than swamping it.
inline WavRegValue wavreg_mean(const Mat& pred, const Mat& target, const WavRegConfig& cfg) {
    WavRegValue v = wavreg(pred, target, cfg);
    const WaveletPyramid tp = dwt_multi(target, cfg.levels);
    v.value = 0.0;
    v.per_band[0] /= static_cast<double>(tp.approx.size());
    for (int l = 0; l < cfg.levels; ++l)
        v.per_band[static_cast<size_t>(l) + 1] /=
            static_cast<double>(tp.details[static_cast<size_t>(l)].size());
    for (double b : v.per_band) v.value += b;
    return v;
}

inline double total_loss(double diff, double wav, double beta) {
    if (!std::isfinite(diff) || !std::isfinite(wav) || !std::isfinite(beta))
        throw std::invalid_argument("total_loss: non-finite input");
    return diff + beta * wav;
}

namespace detail {
inline double diff_sq_norm(const Mat& x, int order) {
    static const char* kNames[] = {"", "velreg", "accreg", "jerk"};
    if (x.rows() < order + 1)
        throw TooShort(std::string(kNames[order]) + ": need at least " + std::to_string(order + 1) +
                       " rows, got " + std::to_string(x.rows()));
    Mat cur = x;
    for (int o = 0; o < order; ++o) {
        Mat next(cur.rows() - 1, cur.cols());
        for (int r = 0; r + 1 < cur.rows(); ++r)
            for (int c = 0; c < cur.cols(); ++c) next(r, c) = cur(r + 1, c) - cur(r, c);
        cur = std::move(next);
    }
    return cur.frob2();
}
}  // namespace detail

inline double velreg(const Mat& pred) { return detail::diff_sq_norm(pred, 1); }
inline double accreg(const Mat& pred) { return detail::diff_sq_norm(pred, 2); }
inline double jerk(const Mat& pred) { return detail::diff_sq_norm(pred, 3); }

// High-frequency Fourier energy reused as a penalty; DC bin is never counted.
inline double lowpass_reg(const Mat& pred, double cutoff_fraction) {
    return hf_energy(pred, cutoff_fraction);
}

namespace detail {
inline double vec_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}
}  // namespace detail

// r(beta) = beta * |g_wav| / |g_diff|.
inline double grad_ratio(const std::vector<double>& g_diff, const std::vector<double>& g_wav,
                         double beta) {
    const double nd = detail::vec_norm(g_diff);
    if (!(nd > 0.0)) throw ZeroBaseGradient("grad_ratio: base gradient has zero norm");
    return beta * (detail::vec_norm(g_wav) / nd);
}

struct AngleDiagnostic {
    double sin_phi = 0.0;
    double ratio = 0.0;
    bool bounded = false;       // true iff ratio < 1
    double bound = 0.0;         // ratio / (1 - ratio) when bounded, +inf otherwise
};

// Deviation angle of the combined update from the base gradient, with the
// triangle-inequality bound r/(1-r) valid for r < 1.
inline AngleDiagnostic angle_diagnostic(const std::vector<double>& g_diff,
                                        const std::vector<double>& g_wav, double beta) {
    if (g_diff.size() != g_wav.size())
        throw std::invalid_argument("angle_diagnostic: gradient size mismatch");
    AngleDiagnostic out;
    out.ratio = grad_ratio(g_diff, g_wav, beta);
    out.bounded = out.ratio < 1.0;
    out.bound = out.bounded ? out.ratio / (1.0 - out.ratio) : std::numeric_limits<double>::infinity();

    double dd = 0.0, dw = 0.0;
    for (size_t i = 0; i < g_diff.size(); ++i) {
        dd += g_diff[i] * g_diff[i];
        dw += g_diff[i] * beta * g_wav[i];
    }
    const double proj = dw / dd;  // dd > 0 guaranteed by grad_ratio
    double orth2 = 0.0, tot2 = 0.0;
    for (size_t i = 0; i < g_diff.size(); ++i) {
        const double w = beta * g_wav[i];
        const double o = w - proj * g_diff[i];
        const double t = g_diff[i] + w;
        orth2 += o * o;
        tot2 += t * t;
    }
    out.sin_phi = tot2 > 0.0 ? std::sqrt(orth2 / tot2) : 0.0;
    return out;
}

// --- tape builders -----------------------------------------------------------
// Gradient-carrying versions of the losses, composed from engine primitives.
// The plain Mat functions above serve as the independent value oracles in the
// finite-difference checks.

struct WavRegNodes {
    Tensor value;
    std::vector<Tensor> bands;  // approx term first, then details coarse -> fine
};

namespace detail {
inline std::vector<int> reflect_pad_indices(int length, const PadSpec& pad) {
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(pad.left + length + pad.right));
    for (int r = -pad.left; r < length + pad.right; ++r) idx.push_back(reflect_index(r, length));
    return idx;
}
inline std::vector<int> stride2_indices(int half, int offset) {
    std::vector<int> idx(static_cast<size_t>(half));
    for (int i = 0; i < half; ++i) idx[static_cast<size_t>(i)] = 2 * i + offset;
    return idx;
}
}  // namespace detail

inline WavRegNodes wavreg_node(Tape& tape, const Tensor& pred, const Mat& target,
                               const WavRegConfig& cfg, bool per_band_mean = false) {
    if (pred.shape() != Shape{target.rows(), target.cols()})
        throw ShapeMismatch("wavreg_node: pred " + shape_str(pred.shape()) + " vs target " +
                            std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
    const int length = target.rows();
    const PadSpec pad = pad_spec_for(length, cfg.levels);
    const WaveletPyramid tp = dwt_multi(target, cfg.levels);

    Tensor cur = row_gather(pred, detail::reflect_pad_indices(length, pad));
    std::vector<Tensor> detail_bands;  // fine -> coarse while descending
    for (int l = 0; l < cfg.levels; ++l) {
        const int half = cur.rows() / 2;
        Tensor even = row_gather(cur, detail::stride2_indices(half, 0));
        Tensor odd = row_gather(cur, detail::stride2_indices(half, 1));
        detail_bands.push_back(scalar_mul(sub(even, odd), detail::kInvSqrt2));
        cur = scalar_mul(add(even, odd), detail::kInvSqrt2);
    }

    WavRegNodes out{Tensor{}, {}};
    const double approx_scale =
        per_band_mean ? cfg.weight_approx / static_cast<double>(tp.approx.size()) : cfg.weight_approx;
    Tensor approx_term = scalar_mul(l1(sub(cur, tape.constant(tp.approx))), approx_scale);
    out.bands.push_back(approx_term);
    Tensor acc = approx_term;
    for (int l = 0; l < cfg.levels; ++l) {
        // detail_bands is fine -> coarse; pyramid details are coarse -> fine
        const Tensor& d_pred = detail_bands[static_cast<size_t>(cfg.levels - 1 - l)];
        const double w = cfg.weight_details[static_cast<size_t>(l)];
        const double scale =
            per_band_mean ? w / static_cast<double>(tp.details[static_cast<size_t>(l)].size()) : w;
        Tensor term =
            scalar_mul(l1(sub(d_pred, tape.constant(tp.details[static_cast<size_t>(l)]))), scale);
        out.bands.push_back(term);
        acc = add(acc, term);
    }
    out.value = acc;
    return out;
}

namespace detail {
inline Tensor diff_sq_node(const Tensor& x, int order) {
    static const char* kNames[] = {"", "velreg_node", "accreg_node", "jerk_node"};
    if (x.rows() < order + 1)
        throw TooShort(std::string(kNames[order]) + ": need at least " + std::to_string(order + 1) +
                       " rows, got " + std::to_string(x.rows()));
    Tensor cur = x;
    for (int o = 0; o < order; ++o)
        cur = sub(slice_rows(cur, 1, cur.rows()), slice_rows(cur, 0, cur.rows() - 1));
    return sum(elementwise_mul(cur, cur));
}
}  // namespace detail

inline Tensor velreg_node(const Tensor& pred) { return detail::diff_sq_node(pred, 1); }
inline Tensor accreg_node(const Tensor& pred) { return detail::diff_sq_node(pred, 2); }
inline Tensor jerk_node(const Tensor& pred) { return detail::diff_sq_node(pred, 3); }

// DFT as a constant matrix product; bin weights are folded into the matrices
// so the penalty is sum(RE^2) + sum(IM^2).
inline Tensor lowpass_reg_node(Tape& tape, const Tensor& pred, double cutoff_fraction) {
    detail::require_rank2(pred, "lowpass_reg_node");
    const int length = pred.rows();
    if (length < 2) throw ShapeMismatch("lowpass_reg_node: need at least 2 rows");
    const int nyquist = length / 2;
    std::vector<int> bins;
    for (int k = 1; k <= nyquist; ++k)
        if (static_cast<double>(k) > cutoff_fraction * nyquist) bins.push_back(k);
    if (bins.empty()) return tape.scalar_constant(0.0);

    const double two_pi = 6.283185307179586476925286766559;
    Mat cos_m(static_cast<int>(bins.size()), length);
    Mat sin_m(static_cast<int>(bins.size()), length);
    for (size_t i = 0; i < bins.size(); ++i) {
        const int k = bins[i];
        const double w = (length % 2 == 0 && k == nyquist) ? 1.0 : 2.0;
        const double scale = std::sqrt(w / length);
        for (int t = 0; t < length; ++t) {
            const double a = two_pi * k * t / length;
            cos_m(static_cast<int>(i), t) = scale * std::cos(a);
            sin_m(static_cast<int>(i), t) = -scale * std::sin(a);
        }
    }
    // center each row: subtracting the per-channel mean commutes into the
    // basis, keeping the penalty DC-free like the direct hf_energy
    for (Mat* m : {&cos_m, &sin_m})
        for (int i = 0; i < m->rows(); ++i) {
            double mean = 0.0;
            for (int t = 0; t < length; ++t) mean += (*m)(i, t);
            mean /= length;
            for (int t = 0; t < length; ++t) (*m)(i, t) -= mean;
        }
    Tensor re = matmul(tape.constant(cos_m), pred);
    Tensor im = matmul(tape.constant(sin_m), pred);
    return add(sum(elementwise_mul(re, re)), sum(elementwise_mul(im, im)));
}

}  // namespace camtraj
