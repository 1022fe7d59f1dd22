#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "camtraj/checkpoint.hpp"
#include "camtraj/losses.hpp"
#include "camtraj/mat.hpp"
#include "camtraj/rng.hpp"
#include "camtraj/schedule.hpp"
#include "camtraj/tensor.hpp"
#include "camtraj/trajectory.hpp"
#include "camtraj/util.hpp"

namespace camtraj {

struct NonFiniteLoss : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteSample : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Timestep conditioning: a per-step learned table is the simplest scheme but
// each row only trains when its step is drawn; sinusoidal features through a
// shared learned projection train on every step.
enum class TimestepEmbedding { LearnedTable, Sinusoidal };

inline const char* to_string(TimestepEmbedding e) {
    return e == TimestepEmbedding::LearnedTable ? "learned_table" : "sinusoidal";
}

inline TimestepEmbedding timestep_embedding_from_string(const std::string& s) {
    if (s == "learned_table") return TimestepEmbedding::LearnedTable;
    if (s == "sinusoidal") return TimestepEmbedding::Sinusoidal;
    throw std::invalid_argument("unknown timestep embedding: " + s);
}

struct DenoiserConfig {
    int traj_len = 13;
    int channels = kPoseChannels;
    int latent_dim = 64;
    int depth = 2;
    int heads = 4;
    int cond_dim = 32;
    int ff_mult = 4;
    TimestepEmbedding ts_embed = TimestepEmbedding::Sinusoidal;
    bool residual_zero_init = true;  // attention/FF output projections start at zero

    void validate() const {
        if (traj_len < 2 || channels < 1 || latent_dim < 1 || depth < 1 || heads < 1 ||
            cond_dim < 1 || ff_mult < 1)
            throw std::invalid_argument("DenoiserConfig: all dimensions must be positive");
        if (latent_dim % heads != 0)
            throw std::invalid_argument("DenoiserConfig: latent_dim must be divisible by heads");
        if (latent_dim % 2 != 0)
            throw std::invalid_argument("DenoiserConfig: latent_dim must be even");
    }
};

// Fixed sin/cos features of the diffusion step, frequency-swept like the
// standard transformer encoding.
inline std::vector<double> timestep_features(int s, int width) {
    std::vector<double> f(static_cast<size_t>(width));
    const int half = width / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / half);
        f[static_cast<size_t>(k)] = std::sin(s * freq);
        f[static_cast<size_t>(half + k)] = std::cos(s * freq);
    }
    return f;
}

// Flat parameter store with fixed ordering; the order defines both the
// checkpoint layout and the flattened gradient vectors used by the
// diagnostics.
struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
};

struct DenoiserParams {
    std::vector<Param> params;
    std::map<std::string, size_t> index;

    Param& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw std::invalid_argument("unknown parameter " + name);
        return params[it->second];
    }
    const Param& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw std::invalid_argument("unknown parameter " + name);
        return params[it->second];
    }

    size_t total_values() const {
        size_t n = 0;
        for (const Param& p : params) n += p.value.size();
        return n;
    }

    bool all_finite() const {
        for (const Param& p : params)
            for (double v : p.value)
                if (!std::isfinite(v)) return false;
        return true;
    }
};

namespace detail {
inline void add_param(DenoiserParams& out, const std::string& name, Shape shape,
                      std::vector<double> value) {
    Param p;
    p.name = name;
    p.shape = std::move(shape);
    p.value = std::move(value);
    p.adam_m.assign(p.value.size(), 0.0);
    p.adam_v.assign(p.value.size(), 0.0);
    out.index[name] = out.params.size();
    out.params.push_back(std::move(p));
}

inline std::vector<double> xavier_uniform(int fan_in, int fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> v(static_cast<size_t>(fan_in) * fan_out);
    for (double& x : v) x = rng.uniform(-a, a);
    return v;
}
}  // namespace detail

inline DenoiserParams init_denoiser_params(const DenoiserConfig& cfg, int sched_steps, Rng rng) {
    cfg.validate();
    const int d = cfg.latent_dim;
    const int c = cfg.channels;
    const int ff = d * cfg.ff_mult;
    DenoiserParams out;

    detail::add_param(out, "input_proj.w", {c, d}, detail::xavier_uniform(c, d, rng));
    detail::add_param(out, "input_proj.b", {1, d}, std::vector<double>(static_cast<size_t>(d), 0.0));
    if (cfg.ts_embed == TimestepEmbedding::LearnedTable) {
        std::vector<double> table(static_cast<size_t>(sched_steps) * d);
        for (double& x : table) x = rng.uniform(-0.02, 0.02);
        detail::add_param(out, "timestep.table", {sched_steps, d}, std::move(table));
    } else {
        detail::add_param(out, "timestep.w", {d, d}, detail::xavier_uniform(d, d, rng));
        detail::add_param(out, "timestep.b", {1, d}, std::vector<double>(static_cast<size_t>(d), 0.0));
    }
    detail::add_param(out, "cam_proj.w", {cfg.cond_dim, d},
                      detail::xavier_uniform(cfg.cond_dim, d, rng));
    detail::add_param(out, "cam_proj.b", {1, d}, std::vector<double>(static_cast<size_t>(d), 0.0));
    {
        std::vector<double> pos(static_cast<size_t>(cfg.traj_len + 1) * d);
        for (double& x : pos) x = rng.uniform(-0.02, 0.02);
        detail::add_param(out, "pos.emb", {cfg.traj_len + 1, d}, std::move(pos));
    }
    for (int b = 0; b < cfg.depth; ++b) {
        const std::string pre = "block" + std::to_string(b) + ".";
        auto ones = [&] { return std::vector<double>(static_cast<size_t>(d), 1.0); };
        auto zeros_d = [&] { return std::vector<double>(static_cast<size_t>(d), 0.0); };
        detail::add_param(out, pre + "ln1.gain", {1, d}, ones());
        detail::add_param(out, pre + "ln1.bias", {1, d}, zeros_d());
        for (const char* w : {"attn.wq", "attn.wk", "attn.wv"})
            detail::add_param(out, pre + w, {d, d}, detail::xavier_uniform(d, d, rng));
        detail::add_param(out, pre + "attn.wo", {d, d},
                          cfg.residual_zero_init ? std::vector<double>(static_cast<size_t>(d) * d, 0.0)
                                                 : detail::xavier_uniform(d, d, rng));
        for (const char* bias : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
            detail::add_param(out, pre + bias, {1, d}, zeros_d());
        detail::add_param(out, pre + "ln2.gain", {1, d}, ones());
        detail::add_param(out, pre + "ln2.bias", {1, d}, zeros_d());
        detail::add_param(out, pre + "ff.w1", {d, ff}, detail::xavier_uniform(d, ff, rng));
        detail::add_param(out, pre + "ff.b1", {1, ff}, std::vector<double>(static_cast<size_t>(ff), 0.0));
        detail::add_param(out, pre + "ff.w2", {ff, d},
                          cfg.residual_zero_init ? std::vector<double>(static_cast<size_t>(ff) * d, 0.0)
                                                 : detail::xavier_uniform(ff, d, rng));
        detail::add_param(out, pre + "ff.b2", {1, d}, zeros_d());
    }
    detail::add_param(out, "final_ln.gain", {1, d}, std::vector<double>(static_cast<size_t>(d), 1.0));
    detail::add_param(out, "final_ln.bias", {1, d}, std::vector<double>(static_cast<size_t>(d), 0.0));
    // zero-initialized output projection: the untrained model predicts zero noise
    detail::add_param(out, "out_proj.w", {d, c}, std::vector<double>(static_cast<size_t>(d) * c, 0.0));
    detail::add_param(out, "out_proj.b", {1, c}, std::vector<double>(static_cast<size_t>(c), 0.0));
    return out;
}

// Leaf tensors for every parameter, in parameter order.
struct BoundParams {
    std::vector<Tensor> leaves;
    const DenoiserParams* source = nullptr;

    const Tensor& at(const DenoiserParams& p, const std::string& name) const {
        return leaves[p.index.at(name)];
    }
};

inline BoundParams bind_params(Tape& tape, const DenoiserParams& params, bool requires_grad) {
    BoundParams out;
    out.source = &params;
    out.leaves.reserve(params.params.size());
    for (const Param& p : params.params) out.leaves.push_back(tape.leaf(p.shape, p.value, requires_grad));
    return out;
}

struct DenoiseOut {
    Tensor eps_hat;
    Tensor k0_hat;
};

// Conditional DiT denoiser. The fused condition token (timestep embedding +
// projected conditioning feature) is prepended to the embedded trajectory
// tokens and stripped from the output.
inline DenoiseOut denoise_forward_tape(Tape& tape, const BoundParams& bp,
                                       const DenoiserParams& params, const Tensor& k_s, int s,
                                       const std::vector<double>& cond, const DenoiserConfig& cfg,
                                       const NoiseSchedule& sched) {
    cfg.validate();
    if (s < 1 || s > sched.steps)
        throw StepOutOfRange("denoise_forward: step " + std::to_string(s));
    if (k_s.shape() != Shape{cfg.traj_len, cfg.channels})
        throw ShapeMismatch("denoise_forward: trajectory shape " + shape_str(k_s.shape()));
    if (static_cast<int>(cond.size()) != cfg.cond_dim)
        throw ShapeMismatch("denoise_forward: conditioning width " + std::to_string(cond.size()) +
                            ", expected " + std::to_string(cfg.cond_dim));

    auto P = [&](const std::string& name) -> const Tensor& { return bp.at(params, name); };
    const int d = cfg.latent_dim;
    const int dh = d / cfg.heads;

    Tensor tokens = add_rowvec(matmul(k_s, P("input_proj.w")), P("input_proj.b"));
    Tensor e_s = cfg.ts_embed == TimestepEmbedding::LearnedTable
                     ? row_gather(P("timestep.table"), {s - 1})
                     : add_rowvec(matmul(tape.constant({1, d}, timestep_features(s, d)),
                                          P("timestep.w")),
                                   P("timestep.b"));
    Tensor cond_row = tape.constant({1, cfg.cond_dim}, cond);
    Tensor e_cam = add_rowvec(matmul(cond_row, P("cam_proj.w")), P("cam_proj.b"));
    Tensor cond_token = add(e_s, e_cam);

    Tensor x = concat_rows({cond_token, tokens});
    x = add(x, P("pos.emb"));

    for (int b = 0; b < cfg.depth; ++b) {
        const std::string pre = "block" + std::to_string(b) + ".";
        Tensor h = add_rowvec(mul_rowvec(layer_norm_rows(x), P(pre + "ln1.gain")), P(pre + "ln1.bias"));
        Tensor q = add_rowvec(matmul(h, P(pre + "attn.wq")), P(pre + "attn.bq"));
        Tensor k = add_rowvec(matmul(h, P(pre + "attn.wk")), P(pre + "attn.bk"));
        Tensor v = add_rowvec(matmul(h, P(pre + "attn.wv")), P(pre + "attn.bv"));
        std::vector<Tensor> heads_t;
        for (int hd = 0; hd < cfg.heads; ++hd) {
            Tensor qh = slice_cols(q, hd * dh, (hd + 1) * dh);
            Tensor kh = slice_cols(k, hd * dh, (hd + 1) * dh);
            Tensor vh = slice_cols(v, hd * dh, (hd + 1) * dh);
            Tensor scores = scalar_mul(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
            Tensor probs = softmax_rows(scores);
            heads_t.push_back(transpose(matmul(probs, vh)));
        }
        Tensor merged = transpose(concat_rows(heads_t));
        Tensor att = add_rowvec(matmul(merged, P(pre + "attn.wo")), P(pre + "attn.bo"));
        x = add(x, att);

        Tensor h2 = add_rowvec(mul_rowvec(layer_norm_rows(x), P(pre + "ln2.gain")), P(pre + "ln2.bias"));
        Tensor ff = add_rowvec(matmul(h2, P(pre + "ff.w1")), P(pre + "ff.b1"));
        ff = gelu(ff);
        ff = add_rowvec(matmul(ff, P(pre + "ff.w2")), P(pre + "ff.b2"));
        x = add(x, ff);
    }

    Tensor xf = add_rowvec(mul_rowvec(layer_norm_rows(x), P("final_ln.gain")), P("final_ln.bias"));
    Tensor out = add_rowvec(matmul(xf, P("out_proj.w")), P("out_proj.b"));

    DenoiseOut res;
    res.eps_hat = slice_rows(out, 1, cfg.traj_len + 1);  // condition token discarded
    const double ab = sched.at(s);
    res.k0_hat = scalar_mul(sub(k_s, scalar_mul(res.eps_hat, std::sqrt(1.0 - ab))),
                            1.0 / std::sqrt(ab));
    return res;
}

struct DenoiseValue {
    Mat eps_hat;
    Mat k0_hat;
};

inline DenoiseValue denoise_forward(const Mat& k_s, int s, const std::vector<double>& cond,
                                    const DenoiserParams& params, const DenoiserConfig& cfg,
                                    const NoiseSchedule& sched) {
    Tape tape;
    BoundParams bp = bind_params(tape, params, false);
    Tensor kt = tape.constant(k_s);
    DenoiseOut out = denoise_forward_tape(tape, bp, params, kt, s, cond, cfg, sched);
    return {out.eps_hat.as_mat(), out.k0_hat.as_mat()};
}

// Per-channel affine normalization of flat trajectories; statistics are part
// of the model (stored in the checkpoint sidecar).
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stdev;

    Mat normalize(const Mat& x) const {
        Mat out(x.rows(), x.cols());
        for (int r = 0; r < x.rows(); ++r)
            for (int c = 0; c < x.cols(); ++c)
                out(r, c) = (x(r, c) - mean[static_cast<size_t>(c)]) / stdev[static_cast<size_t>(c)];
        return out;
    }
    Mat unnormalize(const Mat& x) const {
        Mat out(x.rows(), x.cols());
        for (int r = 0; r < x.rows(); ++r)
            for (int c = 0; c < x.cols(); ++c)
                out(r, c) = x(r, c) * stdev[static_cast<size_t>(c)] + mean[static_cast<size_t>(c)];
        return out;
    }
};

inline NormStats compute_norm_stats(const std::vector<Mat>& flats) {
    if (flats.empty()) throw std::invalid_argument("compute_norm_stats: empty dataset");
    const int c = flats[0].cols();
    NormStats st;
    st.mean.assign(static_cast<size_t>(c), 0.0);
    st.stdev.assign(static_cast<size_t>(c), 0.0);
    size_t n = 0;
    for (const Mat& m : flats) {
        for (int r = 0; r < m.rows(); ++r)
            for (int j = 0; j < c; ++j) st.mean[static_cast<size_t>(j)] += m(r, j);
        n += static_cast<size_t>(m.rows());
    }
    for (double& v : st.mean) v /= static_cast<double>(n);
    for (const Mat& m : flats)
        for (int r = 0; r < m.rows(); ++r)
            for (int j = 0; j < c; ++j) {
                const double d = m(r, j) - st.mean[static_cast<size_t>(j)];
                st.stdev[static_cast<size_t>(j)] += d * d;
            }
    for (double& v : st.stdev) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-8);
    return st;
}

struct AdamOptimizer {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long t = 0;

    void step(DenoiserParams& params, const std::vector<std::vector<double>>& grads) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t p = 0; p < params.params.size(); ++p) {
            Param& pp = params.params[p];
            const std::vector<double>& g = grads[p];
            for (size_t i = 0; i < pp.value.size(); ++i) {
                pp.adam_m[i] = beta1 * pp.adam_m[i] + (1.0 - beta1) * g[i];
                pp.adam_v[i] = beta2 * pp.adam_v[i] + (1.0 - beta2) * g[i] * g[i];
                const double mhat = pp.adam_m[i] / bc1;
                const double vhat = pp.adam_v[i] / bc2;
                pp.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

struct TrainItem {
    Mat k0;  // normalized T x C trajectory
    std::vector<double> cond;
};

struct TrainStepReport {
    LossReport loss;
    double grad_ratio = 0.0;
    double sin_phi = 0.0;
    double bound = 0.0;
    bool bounded = true;
};

// One optimization step: epsilon-prediction MSE plus the wavelet term on the
// reconstructed clean trajectory, gradients split per term for diagnostics,
// combined update applied through Adam.
inline TrainStepReport train_step(const std::vector<TrainItem>& batch, DenoiserParams& params,
                                  const NoiseSchedule& sched, const DenoiserConfig& cfg,
                                  const WavRegConfig& loss_cfg, AdamOptimizer& opt, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    Tape tape;
    BoundParams bp = bind_params(tape, params, true);

    Tensor diff_acc, wav_acc;
    std::vector<double> band_sums(static_cast<size_t>(loss_cfg.levels) + 1, 0.0);
    for (size_t i = 0; i < batch.size(); ++i) {
        const TrainItem& item = batch[i];
        const int s = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(sched.steps)));
        Mat eps(item.k0.rows(), item.k0.cols());
        for (double& v : eps.data()) v = rng.normal();
        const Mat k_s = forward_noise(item.k0, s, eps, sched);

        DenoiseOut out = denoise_forward_tape(tape, bp, params, tape.constant(k_s), s, item.cond,
                                              cfg, sched);
        Tensor item_diff = mse(out.eps_hat, tape.constant(eps));
        // Training wavelet term: per-band mean, weighted by sqrt(snr). The
        // clean-trajectory reconstruction scales the noise error by
        // sqrt((1-ab)/ab), which explodes near pure noise; the weight cancels
        // it, leaving the wavelet-domain L1 of the noise prediction error and
        // keeping the wavelet gradient a bounded perturbation at every step.
        const double ab = sched.at(s);
        const double snr_weight = std::sqrt(ab / (1.0 - ab));
        WavRegNodes wr = wavreg_node(tape, out.k0_hat, item.k0, loss_cfg, true);
        Tensor item_wav = scalar_mul(wr.value, snr_weight);
        for (size_t b = 0; b < wr.bands.size(); ++b)
            band_sums[b] += snr_weight * wr.bands[b].value()[0];

        diff_acc = (i == 0) ? item_diff : add(diff_acc, item_diff);
        wav_acc = (i == 0) ? item_wav : add(wav_acc, item_wav);
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    Tensor diff = scalar_mul(diff_acc, inv_b);
    Tensor wav = scalar_mul(wav_acc, inv_b);

    TrainStepReport rep;
    rep.loss.diff = diff.value()[0];
    rep.loss.wav = wav.value()[0];
    rep.loss.total = total_loss(rep.loss.diff, rep.loss.wav, loss_cfg.beta);
    for (double b : band_sums) rep.loss.per_band.push_back(b * inv_b);
    if (!std::isfinite(rep.loss.total))
        throw NonFiniteLoss("train_step: non-finite loss, aborting step");

    auto collect = [&](std::vector<std::vector<double>>& per_param, std::vector<double>& flat) {
        per_param.clear();
        flat.clear();
        flat.reserve(params.total_values());
        for (size_t p = 0; p < bp.leaves.size(); ++p) {
            per_param.push_back(bp.leaves[p].grad());
            flat.insert(flat.end(), per_param.back().begin(), per_param.back().end());
        }
    };

    std::vector<std::vector<double>> gd_param, gw_param;
    std::vector<double> gd_flat, gw_flat;
    tape.backward(diff);
    collect(gd_param, gd_flat);
    if (loss_cfg.beta > 0.0) {
        tape.backward(wav);
        collect(gw_param, gw_flat);
    } else {
        gw_param.assign(gd_param.size(), {});
        for (size_t p = 0; p < gd_param.size(); ++p)
            gw_param[p].assign(gd_param[p].size(), 0.0);
        gw_flat.assign(gd_flat.size(), 0.0);
    }

    rep.grad_ratio = grad_ratio(gd_flat, gw_flat, loss_cfg.beta);
    const AngleDiagnostic ad = angle_diagnostic(gd_flat, gw_flat, loss_cfg.beta);
    rep.sin_phi = ad.sin_phi;
    rep.bound = ad.bound;
    rep.bounded = ad.bounded;

    std::vector<std::vector<double>> g_total(gd_param.size());
    for (size_t p = 0; p < gd_param.size(); ++p) {
        g_total[p].resize(gd_param[p].size());
        for (size_t i = 0; i < g_total[p].size(); ++i)
            g_total[p][i] = gd_param[p][i] + loss_cfg.beta * gw_param[p][i];
    }
    opt.step(params, g_total);
    return rep;
}

// Ancestral sampler, fully deterministic in (params, cond, seed). Works in
// the normalized space; the result is mapped back through the stored
// statistics.
inline Mat sample_raw(const std::vector<double>& cond, const DenoiserParams& params,
                      const NoiseSchedule& sched, const DenoiserConfig& cfg, std::uint64_t seed,
                      const NormStats& norm) {
    Rng rng(seed);
    Mat x(cfg.traj_len, cfg.channels);
    for (double& v : x.data()) v = rng.normal();

    for (int s = sched.steps; s >= 1; --s) {
        const DenoiseValue out = denoise_forward(x, s, cond, params, cfg, sched);
        const double ab = sched.at(s);
        const double ab_prev = sched.at(s - 1);
        const double alpha = ab / ab_prev;
        const double beta_s = 1.0 - alpha;
        const double mean_scale = 1.0 / std::sqrt(alpha);
        const double eps_scale = beta_s / std::sqrt(1.0 - ab);
        for (size_t i = 0; i < x.size(); ++i)
            x.data()[i] = mean_scale * (x.data()[i] - eps_scale * out.eps_hat.data()[i]);
        if (s > 1) {
            const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta_s);
            for (double& v : x.data()) v += sigma * rng.normal();
        }
        if (!x.all_finite()) throw NonFiniteSample("sample: non-finite state at step " + std::to_string(s));
    }
    return norm.unnormalize(x);
}

inline FlatTrajectory sample(const std::vector<double>& cond, const DenoiserParams& params,
                             const NoiseSchedule& sched, const DenoiserConfig& cfg,
                             std::uint64_t seed, const NormStats& norm) {
    return FlatTrajectory(sample_raw(cond, params, sched, cfg, seed, norm));
}

// --- model persistence -------------------------------------------------------

struct Model {
    DenoiserConfig cfg;
    DenoiserParams params;
    NoiseSchedule sched;
    NormStats norm;
    WavRegConfig loss_cfg = WavRegConfig::defaults();
    std::uint64_t train_seed = 0;
};

inline void save_model(const std::filesystem::path& weights_path,
                       const std::filesystem::path& sidecar_path, const Model& model) {
    std::vector<NamedTensorData> tensors;
    for (const Param& p : model.params.params) {
        NamedTensorData t;
        t.name = p.name;
        for (int d : p.shape) t.dims.push_back(static_cast<std::uint64_t>(d));
        t.values = p.value;
        tensors.push_back(std::move(t));
    }
    write_checkpoint(weights_path, tensors);

    nlohmann::json j;
    j["config"] = {{"traj_len", model.cfg.traj_len},   {"channels", model.cfg.channels},
                   {"latent_dim", model.cfg.latent_dim}, {"depth", model.cfg.depth},
                   {"heads", model.cfg.heads},         {"cond_dim", model.cfg.cond_dim},
                   {"ff_mult", model.cfg.ff_mult},
                   {"ts_embed", std::string(to_string(model.cfg.ts_embed))},
                   {"residual_zero_init", model.cfg.residual_zero_init}};
    j["schedule"] = {{"type", "cosine"}, {"steps", model.sched.steps}};
    j["norm"] = {{"mean", model.norm.mean}, {"stdev", model.norm.stdev}};
    j["loss"] = {{"levels", model.loss_cfg.levels},
                 {"weight_approx", model.loss_cfg.weight_approx},
                 {"weight_details", model.loss_cfg.weight_details},
                 {"beta", model.loss_cfg.beta}};
    j["train_seed"] = model.train_seed;
    atomic_write_file(sidecar_path, j.dump(2) + "\n");
}

inline Model load_model(const std::filesystem::path& weights_path,
                        const std::filesystem::path& sidecar_path) {
    const nlohmann::json j = nlohmann::json::parse(read_file(sidecar_path));
    Model model;
    const auto& jc = j.at("config");
    model.cfg.traj_len = jc.at("traj_len").get<int>();
    model.cfg.channels = jc.at("channels").get<int>();
    model.cfg.latent_dim = jc.at("latent_dim").get<int>();
    model.cfg.depth = jc.at("depth").get<int>();
    model.cfg.heads = jc.at("heads").get<int>();
    model.cfg.cond_dim = jc.at("cond_dim").get<int>();
    model.cfg.ff_mult = jc.at("ff_mult").get<int>();
    model.cfg.ts_embed = timestep_embedding_from_string(jc.at("ts_embed").get<std::string>());
    model.cfg.residual_zero_init = jc.at("residual_zero_init").get<bool>();
    model.cfg.validate();
    if (j.at("schedule").at("type").get<std::string>() != "cosine")
        throw CheckpointError("unknown schedule type in sidecar");
    model.sched = cosine_schedule(j.at("schedule").at("steps").get<int>());
    model.norm.mean = j.at("norm").at("mean").get<std::vector<double>>();
    model.norm.stdev = j.at("norm").at("stdev").get<std::vector<double>>();
    const auto& jl = j.at("loss");
    model.loss_cfg = WavRegConfig(jl.at("levels").get<int>(), jl.at("weight_approx").get<double>(),
                                  jl.at("weight_details").get<std::vector<double>>(),
                                  jl.at("beta").get<double>());
    model.train_seed = j.at("train_seed").get<std::uint64_t>();

    const std::vector<NamedTensorData> tensors = read_checkpoint(weights_path);
    model.params = init_denoiser_params(model.cfg, model.sched.steps, Rng(0));
    if (tensors.size() != model.params.params.size())
        throw CheckpointError("checkpoint tensor count mismatch");
    for (const NamedTensorData& t : tensors) {
        Param& p = model.params.at(t.name);
        Shape shape;
        for (std::uint64_t d : t.dims) shape.push_back(static_cast<int>(d));
        if (shape != p.shape) throw CheckpointError("checkpoint shape mismatch for " + t.name);
        p.value = t.values;
        p.adam_m.assign(p.value.size(), 0.0);
        p.adam_v.assign(p.value.size(), 0.0);
    }
    return model;
}

// --- training loop -----------------------------------------------------------

struct TrainOptions {
    int steps = 3000;
    int batch_size = 16;
    double lr = 1e-3;
    int warmup_steps = 100;        // linear ramp from 0 to lr
    bool lr_cosine_decay = false;  // decay to lr_floor_fraction * lr after warmup
    double lr_floor_fraction = 0.05;
    double ema_decay = 0.0;        // 0 disables; sampled weights come from the EMA
    std::uint64_t seed = 1;
    int sched_steps = 1000;
    DenoiserConfig cfg;
    WavRegConfig loss_cfg = WavRegConfig::defaults();
};

struct RawItem {
    Mat flat;  // world-space T x C trajectory
    std::vector<double> cond;
};

struct TrainResult {
    Model model;
    std::string log_csv;  // step, diff, wav, total, r_beta, sin_phi, bound
};

inline TrainResult train_denoiser(const std::vector<RawItem>& dataset, const TrainOptions& opts) {
    if (dataset.empty()) throw std::invalid_argument("train_denoiser: empty dataset");
    opts.cfg.validate();

    std::vector<Mat> flats;
    flats.reserve(dataset.size());
    for (const RawItem& it : dataset) flats.push_back(it.flat);
    const NormStats norm = compute_norm_stats(flats);

    std::vector<TrainItem> items;
    items.reserve(dataset.size());
    for (const RawItem& it : dataset) items.push_back({norm.normalize(it.flat), it.cond});

    TrainResult res;
    res.model.cfg = opts.cfg;
    res.model.sched = cosine_schedule(opts.sched_steps);
    res.model.norm = norm;
    res.model.loss_cfg = opts.loss_cfg;
    res.model.train_seed = opts.seed;

    Rng init_rng = Rng(opts.seed).fork(0x1717);
    res.model.params = init_denoiser_params(opts.cfg, opts.sched_steps, init_rng);

    AdamOptimizer opt;
    Rng step_rng = Rng(opts.seed).fork(0x5151);

    // shadow copy for the exponential moving average of the weights
    DenoiserParams ema = res.model.params;
    const bool use_ema = opts.ema_decay > 0.0;

    const double pi = 3.14159265358979323846;
    std::ostringstream log;
    log << "step,diff,wav,total,r_beta,sin_phi,bound\n";
    for (int step = 1; step <= opts.steps; ++step) {
        if (opts.warmup_steps > 0 && step <= opts.warmup_steps) {
            opt.lr = opts.lr * static_cast<double>(step) / opts.warmup_steps;
        } else if (opts.lr_cosine_decay) {
            const double u = static_cast<double>(step - 1 - opts.warmup_steps) /
                             std::max(1, opts.steps - opts.warmup_steps);
            const double floor_lr = opts.lr * opts.lr_floor_fraction;
            opt.lr = floor_lr + (opts.lr - floor_lr) * 0.5 * (1.0 + std::cos(pi * u));
        } else {
            opt.lr = opts.lr;
        }
        std::vector<TrainItem> batch;
        batch.reserve(static_cast<size_t>(opts.batch_size));
        for (int b = 0; b < opts.batch_size; ++b)
            batch.push_back(items[static_cast<size_t>(step_rng.bounded(items.size()))]);
        const TrainStepReport rep =
            train_step(batch, res.model.params, res.model.sched, opts.cfg, opts.loss_cfg, opt, step_rng);
        if (use_ema)
            for (size_t p = 0; p < ema.params.size(); ++p)
                for (size_t i = 0; i < ema.params[p].value.size(); ++i)
                    ema.params[p].value[i] =
                        opts.ema_decay * ema.params[p].value[i] +
                        (1.0 - opts.ema_decay) * res.model.params.params[p].value[i];
        log << step << ',' << fmt_g17(rep.loss.diff) << ',' << fmt_g17(rep.loss.wav) << ','
            << fmt_g17(rep.loss.total) << ',' << fmt_g17(rep.grad_ratio) << ','
            << fmt_g17(rep.sin_phi) << ',' << (rep.bounded ? fmt_g17(rep.bound) : "inf") << '\n';
    }
    if (use_ema) res.model.params = std::move(ema);
    res.log_csv = log.str();
    return res;
}

}  // namespace camtraj
