// camtraj: dataset generation, denoiser training, sampling, evaluation,
// analysis, and export for camera-pose trajectory modeling.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "camtraj/analysis.hpp"
#include "camtraj/denoiser.hpp"
#include "camtraj/evalkit.hpp"
#include "camtraj/runio.hpp"
#include "camtraj/taskgen.hpp"
#include "camtraj/trajectory.hpp"
#include "camtraj/util.hpp"

namespace fs = std::filesystem;
using namespace camtraj;

namespace {

struct Common {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("--config", common.config_path, "key=value config file");
    cmd->add_option("--seed", common.seed, "run seed (required; no wall-clock default)")->required();
    cmd->add_option("--out", common.out, "output directory")->required();
}

RunConfig resolve(const Common& common, std::map<std::string, std::string> defaults,
                  const std::map<std::string, std::string>& flag_overrides) {
    RunConfig cfg(std::move(defaults));
    if (!common.config_path.empty()) cfg.load_file(common.config_path);
    for (const auto& [k, v] : flag_overrides) cfg.set(k, v, "flag");
    return cfg;
}

fs::path start_run(const Common& common, const std::string& command, const RunConfig& cfg) {
    const fs::path dir = make_run_dir(common.out, command, cfg, common.seed);
    atomic_write_file(dir / "config.resolved",
                      cfg.resolved() + "seed=" + std::to_string(common.seed) + "\n");
    return dir;
}

std::vector<MotionClass> parse_classes(const RunConfig& cfg) {
    std::vector<MotionClass> classes;
    for (const std::string& name : cfg.list("classes"))
        classes.push_back(motion_class_from_string(name));
    if (classes.empty()) throw ConfigError("classes: none selected");
    return classes;
}

std::vector<DatasetRecord> load_records(const std::string& path) {
    return parse_dataset_text(read_file(path));
}

std::vector<RawItem> to_raw_items(const std::vector<DatasetRecord>& records, int cond_dim) {
    const int width = scene_feature_width(cond_dim);
    std::vector<RawItem> items;
    items.reserve(records.size());
    for (const DatasetRecord& r : records) {
        const SceneStub scene = SceneStub::from_seed(r.scene_seed, width);
        items.push_back({r.traj, encode_condition(r.instruction, scene)});
    }
    return items;
}

const std::map<std::string, std::string> kModelDefaults = {
    {"latent_dim", "64"}, {"depth", "2"},          {"heads", "4"},
    {"cond_dim", "32"},   {"ff_mult", "4"},        {"ts_embed", "sinusoidal"},
    {"steps", "3000"},    {"batch", "32"},         {"lr", "0.001"},
    {"sched_steps", "1000"}, {"beta", "0.1"},      {"levels", "3"},
    {"lambda", "2,1,0.5,0.25"},
};

DenoiserConfig model_config(const RunConfig& cfg, int traj_len) {
    DenoiserConfig mc;
    mc.traj_len = traj_len;
    mc.channels = kPoseChannels;
    mc.latent_dim = static_cast<int>(cfg.integer("latent_dim"));
    mc.depth = static_cast<int>(cfg.integer("depth"));
    mc.heads = static_cast<int>(cfg.integer("heads"));
    mc.cond_dim = static_cast<int>(cfg.integer("cond_dim"));
    mc.ff_mult = static_cast<int>(cfg.integer("ff_mult"));
    mc.ts_embed = timestep_embedding_from_string(cfg.str("ts_embed"));
    mc.validate();
    return mc;
}

WavRegConfig loss_config(const RunConfig& cfg) {
    const int levels = static_cast<int>(cfg.integer("levels"));
    const std::vector<double> lambda = cfg.real_list("lambda");
    if (static_cast<int>(lambda.size()) != levels + 1)
        throw ConfigError("lambda: expected " + std::to_string(levels + 1) + " weights (approx + " +
                          std::to_string(levels) + " details)");
    return WavRegConfig(levels, lambda[0], {lambda.begin() + 1, lambda.end()}, cfg.real("beta"));
}

TrainOptions train_options(const RunConfig& cfg, const Common& common, int traj_len) {
    TrainOptions opts;
    opts.cfg = model_config(cfg, traj_len);
    opts.loss_cfg = loss_config(cfg);
    opts.steps = static_cast<int>(cfg.integer("steps"));
    opts.batch_size = static_cast<int>(cfg.integer("batch"));
    opts.lr = cfg.real("lr");
    opts.sched_steps = static_cast<int>(cfg.integer("sched_steps"));
    opts.seed = common.seed;
    return opts;
}

Instruction instruction_from(const RunConfig& cfg) {
    Instruction instr;
    instr.motion_class = motion_class_from_string(cfg.str("class"));
    instr.speed = speed_from_string(cfg.str("speed"));
    for (const std::string& c : cfg.list("components"))
        instr.components.push_back(motion_class_from_string(c));
    if (cfg.str("magnitude").empty()) {
        const MagnitudeBounds b = magnitude_bounds(instr.motion_class);
        instr.magnitude = 0.5 * (b.lo + b.hi);
    } else {
        instr.magnitude = cfg.real("magnitude");
    }
    instr.validate();
    return instr;
}

std::string verdicts_csv(const std::vector<EvalItem>& items, const EvalResult& res) {
    CsvWriter csv(
        "id,class,speed,magnitude,components,predicted,matched,speed_ok,degenerate,jerk,"
        "lf_fraction,trans_x,trans_y,trans_z,rot_x,rot_y,rot_z,sample_seed");
    for (size_t i = 0; i < items.size(); ++i) {
        const EvalItem& item = items[i];
        const EvalSample& s = res.samples[i];
        std::string comps;
        for (size_t k = 0; k < item.instruction.components.size(); ++k)
            comps += std::string(k ? "+" : "") + to_string(item.instruction.components[k]);
        const AxisScores& ax = s.verdict.axis_scores;
        csv.row({std::to_string(i), to_string(item.instruction.motion_class),
                 to_string(item.instruction.speed), fmt_g17(item.instruction.magnitude), comps,
                 s.verdict.label(), s.matched ? "1" : "0", s.speed_ok ? "1" : "0",
                 s.degenerate ? "1" : "0", fmt_g17(s.jerk_value), fmt_g17(s.lf_fraction),
                 fmt_g17(ax.net_translation[0]), fmt_g17(ax.net_translation[1]),
                 fmt_g17(ax.net_translation[2]), fmt_g17(ax.net_rotation[0]),
                 fmt_g17(ax.net_rotation[1]), fmt_g17(ax.net_rotation[2]),
                 std::to_string(s.sample_seed)});
    }
    return csv.str();
}

std::string summary_csv(const EvalResult& res) {
    CsvWriter csv("class,matched,total,rate");
    for (const auto& [cls, mt] : res.table.per_class)
        csv.row({cls, std::to_string(mt.first), std::to_string(mt.second),
                 fmt_g17(static_cast<double>(mt.first) / mt.second)});
    csv.row({"overall", "", "", fmt_g17(res.table.overall)});
    return csv.str();
}

int cmd_gen_data(const Common& common, const std::map<std::string, std::string>& overrides) {
    RunConfig cfg = resolve(common,
                            {{"per_class", "100"},
                             {"t", "13"},
                             {"dt", "1"},
                             {"classes",
                              "dolly_in,dolly_out,pan_left,pan_right,truck_left,truck_right,"
                              "tilt_up,tilt_down,composite"}},
                            overrides);
    const fs::path dir = start_run(common, "gen-data", cfg);
    DatasetSpec spec;
    spec.per_class = static_cast<int>(cfg.integer("per_class"));
    spec.traj_len = static_cast<int>(cfg.integer("t"));
    spec.dt = cfg.real("dt");
    spec.seed = common.seed;
    spec.classes = parse_classes(cfg);
    atomic_write_file(dir / "dataset.jsonl", build_dataset_text(spec));
    std::cout << dir.string() << "\n";
    return 0;
}

int cmd_train(const Common& common, const std::map<std::string, std::string>& overrides) {
    std::map<std::string, std::string> defaults = kModelDefaults;
    defaults["data"] = "";
    RunConfig cfg = resolve(common, defaults, overrides);
    const fs::path dir = start_run(common, "train", cfg);

    const auto records = load_records(cfg.required("data"));
    if (records.empty()) throw ConfigError("data: empty dataset");
    const int traj_len = records[0].traj.rows();
    const TrainOptions opts = train_options(cfg, common, traj_len);
    const TrainResult res = train_denoiser(to_raw_items(records, opts.cfg.cond_dim), opts);

    save_model(dir / "checkpoint.ct1w", dir / "checkpoint.json", res.model);
    atomic_write_file(dir / "train_log.csv", res.log_csv);
    std::cout << dir.string() << "\n";
    return 0;
}

int cmd_sample(const Common& common, const std::map<std::string, std::string>& overrides) {
    RunConfig cfg = resolve(common,
                            {{"ckpt", ""},
                             {"class", "dolly_in"},
                             {"speed", "regular"},
                             {"magnitude", ""},
                             {"components", ""},
                             {"scene_seed", "0"},
                             {"count", "4"},
                             {"dt", "1"},
                             {"format", "re10k"}},
                            overrides);
    const fs::path dir = start_run(common, "sample", cfg);

    const fs::path ckpt(cfg.required("ckpt"));
    const Model model = load_model(ckpt / "checkpoint.ct1w", ckpt / "checkpoint.json");
    const Instruction instr = instruction_from(cfg);
    const SceneStub scene =
        SceneStub::from_seed(cfg.unsigned64("scene_seed"), scene_feature_width(model.cfg.cond_dim));
    const auto cond = encode_condition(instr, scene);
    const double dt = cfg.real("dt");
    const std::string format = cfg.str("format");
    if (format != "re10k" && format != "jsonl")
        throw ConfigError("format: expected re10k or jsonl");

    const int count = static_cast<int>(cfg.integer("count"));
    std::string jsonl;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t sample_seed = Rng(common.seed).fork(static_cast<std::uint64_t>(i)).seed();
        const FlatTrajectory flat =
            sample(cond, model.params, model.sched, model.cfg, sample_seed, model.norm);
        if (format == "re10k") {
            char name[32];
            std::snprintf(name, sizeof(name), "sample_%03d.txt", i);
            atomic_write_file(dir / name, write_pose_lines(unflatten(flat, dt)));
        } else {
            DatasetRecord rec;
            rec.id = "sample-" + std::to_string(i);
            rec.instruction = instr;
            rec.scene_seed = cfg.unsigned64("scene_seed");
            rec.depth_scale = scene.depth_scale;
            rec.dt = dt;
            rec.traj = flat.values;
            jsonl += serialize_record(rec) + "\n";
        }
    }
    if (format == "jsonl") atomic_write_file(dir / "samples.jsonl", jsonl);
    std::cout << dir.string() << "\n";
    return 0;
}

int cmd_eval(const Common& common, const std::map<std::string, std::string>& overrides) {
    RunConfig cfg = resolve(common,
                            {{"ckpt", ""},
                             {"per_class", "10"},
                             {"classes",
                              "dolly_in,dolly_out,pan_left,pan_right,truck_left,truck_right,"
                              "tilt_up,tilt_down,composite"},
                             {"workers", "1"},
                             {"trans_threshold", "0.1"},
                             {"rot_threshold_deg", "2"}},
                            overrides);
    const fs::path dir = start_run(common, "eval", cfg);

    const fs::path ckpt(cfg.required("ckpt"));
    const Model model = load_model(ckpt / "checkpoint.ct1w", ckpt / "checkpoint.json");
    EvalThresholds thr;
    thr.translation = cfg.real("trans_threshold");
    thr.rotation = cfg.real("rot_threshold_deg") * 3.14159265358979323846 / 180.0;

    const auto items =
        make_eval_items(static_cast<int>(cfg.integer("per_class")), parse_classes(cfg),
                        Rng(common.seed).fork(1).seed(), scene_feature_width(model.cfg.cond_dim));
    const EvalResult res = evaluate_model(model, items, Rng(common.seed).fork(2).seed(), thr,
                                          static_cast<int>(cfg.integer("workers")));

    atomic_write_file(dir / "verdicts.csv", verdicts_csv(items, res));
    atomic_write_file(dir / "summary.csv", summary_csv(res));
    std::cout << dir.string() << "\n";
    return 0;
}

int cmd_analyze(const Common& common, const std::map<std::string, std::string>& overrides) {
    RunConfig cfg = resolve(
        common, {{"data", ""}, {"levels", "3"}, {"cutoff", "0.5"}, {"dump_pyramids", "0"}},
        overrides);
    const fs::path dir = start_run(common, "analyze", cfg);

    const auto records = load_records(cfg.required("data"));
    const int levels = static_cast<int>(cfg.integer("levels"));
    const double cutoff = cfg.real("cutoff");
    const bool dump = cfg.boolean("dump_pyramids");

    std::string header = "id,lf_fraction,lowpass_error,motion_energy,hf_energy,max_step,approx_energy";
    for (int l = levels; l >= 1; --l) header += ",detail_energy_l" + std::to_string(l);
    CsvWriter csv(header);
    for (const DatasetRecord& rec : records) {
        const Trajectory traj = unflatten(FlatTrajectory(rec.traj), rec.dt);
        const AnalysisReport rep = analyze(traj, levels, cutoff);
        std::vector<std::string> row = {rec.id,
                                        fmt_g17(rep.lf_fraction),
                                        fmt_g17(rep.lowpass_error),
                                        fmt_g17(motion_energy(traj)),
                                        fmt_g17(rep.hf_energy),
                                        fmt_g17(rep.max_step),
                                        fmt_g17(rep.bands.approx_energy)};
        for (double e : rep.bands.detail_energies) row.push_back(fmt_g17(e));
        csv.row(row);

        if (dump) {
            const WaveletPyramid pyr = dwt_multi(rec.traj, levels);
            CsvWriter pcsv("band,level,row,channel,value");
            for (int r = 0; r < pyr.approx.rows(); ++r)
                for (int c = 0; c < pyr.approx.cols(); ++c)
                    pcsv.row({"approx", std::to_string(levels), std::to_string(r),
                              std::to_string(c), fmt_g17(pyr.approx(r, c))});
            for (int l = 0; l < levels; ++l)
                for (int r = 0; r < pyr.details[static_cast<size_t>(l)].rows(); ++r)
                    for (int c = 0; c < pyr.details[static_cast<size_t>(l)].cols(); ++c)
                        pcsv.row({"detail", std::to_string(levels - l), std::to_string(r),
                                  std::to_string(c),
                                  fmt_g17(pyr.details[static_cast<size_t>(l)](r, c))});
            atomic_write_file(dir / ("pyramid_" + rec.id + ".csv"), pcsv.str());
        }
    }
    atomic_write_file(dir / "analysis.csv", csv.str());
    std::cout << dir.string() << "\n";
    return 0;
}

int cmd_export(const Common& common, const std::map<std::string, std::string>& overrides) {
    RunConfig cfg =
        resolve(common, {{"data", ""}, {"id", ""}, {"format", "re10k"}}, overrides);
    const fs::path dir = start_run(common, "export", cfg);

    const auto records = load_records(cfg.required("data"));
    const std::string want = cfg.required("id");
    const DatasetRecord* found = nullptr;
    for (const DatasetRecord& rec : records)
        if (rec.id == want) {
            found = &rec;
            break;
        }
    if (!found) throw ConfigError("id: no record '" + want + "' in dataset");

    const std::string format = cfg.str("format");
    if (format == "re10k") {
        atomic_write_file(dir / "export.txt",
                          write_pose_lines(unflatten(FlatTrajectory(found->traj), found->dt)));
    } else if (format == "jsonl") {
        atomic_write_file(dir / "export.jsonl", serialize_record(*found) + "\n");
    } else {
        throw ConfigError("format: expected re10k or jsonl");
    }
    std::cout << dir.string() << "\n";
    return 0;
}

int cmd_sweep(const Common& common, const std::map<std::string, std::string>& overrides) {
    std::map<std::string, std::string> defaults = kModelDefaults;
    defaults["data"] = "";
    defaults["betas"] = "0,0.1";
    defaults["eval_per_class"] = "6";
    defaults["workers"] = "1";
    defaults["eval_workers"] = "1";
    defaults.erase("beta");
    RunConfig cfg = resolve(common, defaults, overrides);
    const fs::path dir = start_run(common, "sweep", cfg);

    const auto records = load_records(cfg.required("data"));
    if (records.empty()) throw ConfigError("data: empty dataset");
    const int traj_len = records[0].traj.rows();

    SweepSpec spec;
    spec.train.cfg = model_config(cfg, traj_len);
    {
        const int levels = static_cast<int>(cfg.integer("levels"));
        const std::vector<double> lambda = cfg.real_list("lambda");
        if (static_cast<int>(lambda.size()) != levels + 1)
            throw ConfigError("lambda: expected " + std::to_string(levels + 1) + " weights");
        spec.train.loss_cfg =
            WavRegConfig(levels, lambda[0], {lambda.begin() + 1, lambda.end()}, 0.0);
    }
    spec.train.steps = static_cast<int>(cfg.integer("steps"));
    spec.train.batch_size = static_cast<int>(cfg.integer("batch"));
    spec.train.lr = cfg.real("lr");
    spec.train.sched_steps = static_cast<int>(cfg.integer("sched_steps"));
    spec.train.seed = common.seed;
    spec.dataset = to_raw_items(records, spec.train.cfg.cond_dim);
    spec.eval_items = make_eval_items(static_cast<int>(cfg.integer("eval_per_class")),
                                      DatasetSpec{}.classes, Rng(common.seed).fork(1).seed(),
                                      scene_feature_width(spec.train.cfg.cond_dim));
    spec.eval_seed = Rng(common.seed).fork(2).seed();
    spec.eval_workers = static_cast<int>(cfg.integer("eval_workers"));

    const std::vector<double> betas = cfg.real_list("betas");
    const auto rows = beta_sweep(betas, spec, static_cast<int>(cfg.integer("workers")));

    CsvWriter csv("beta,success_rate,mean_jerk,lf_fraction,failed,error");
    for (const SweepRow& row : rows)
        csv.row({fmt_g17(row.beta), fmt_g17(row.success), fmt_g17(row.mean_jerk),
                 fmt_g17(row.lf_fraction), row.failed ? "1" : "0", row.error});
    atomic_write_file(dir / "sweep.csv", csv.str());
    std::cout << dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"camera trajectory toolkit"};
    app.require_subcommand(1);

    struct Sub {
        CLI::App* cmd = nullptr;
        Common common;
        std::map<std::string, std::string> overrides;
        int (*run)(const Common&, const std::map<std::string, std::string>&) = nullptr;
    };
    // stable addresses: option callbacks capture pointers into this vector
    static std::vector<Sub> subs(7);

    auto add_override = [](CLI::App* cmd, std::map<std::string, std::string>* overrides,
                           const std::string& flag, const std::string& key, const char* desc) {
        cmd->add_option_function<std::string>(
            flag, [overrides, key](const std::string& v) { (*overrides)[key] = v; }, desc);
    };

    {
        Sub& s = subs[0];
        s.cmd = app.add_subcommand("gen-data", "generate a synthetic trajectory dataset");
        s.run = cmd_gen_data;
        add_common(s.cmd, s.common);
        add_override(s.cmd, &s.overrides, "--classes", "classes", "comma-separated class list");
        add_override(s.cmd, &s.overrides, "--t", "t", "trajectory length (default 13)");
        add_override(s.cmd, &s.overrides, "--per-class", "per_class", "records per class");
    }
    {
        Sub& s = subs[1];
        s.cmd = app.add_subcommand("train", "train the trajectory denoiser");
        s.run = cmd_train;
        add_common(s.cmd, s.common);
        add_override(s.cmd, &s.overrides, "--data", "data", "dataset JSONL path");
        add_override(s.cmd, &s.overrides, "--beta", "beta", "wavelet loss weight");
        add_override(s.cmd, &s.overrides, "--levels", "levels", "wavelet levels");
        add_override(s.cmd, &s.overrides, "--steps", "steps", "training steps");
    }
    {
        Sub& s = subs[2];
        s.cmd = app.add_subcommand("sample", "sample trajectories from a checkpoint");
        s.run = cmd_sample;
        add_common(s.cmd, s.common);
        add_override(s.cmd, &s.overrides, "--ckpt", "ckpt", "checkpoint run directory");
        add_override(s.cmd, &s.overrides, "--class", "class", "motion class");
        add_override(s.cmd, &s.overrides, "--format", "format", "re10k|jsonl");
        add_override(s.cmd, &s.overrides, "--count", "count", "number of seeds to draw");
    }
    {
        Sub& s = subs[3];
        s.cmd = app.add_subcommand("eval", "evaluate success rate on held-out instructions");
        s.run = cmd_eval;
        add_common(s.cmd, s.common);
        add_override(s.cmd, &s.overrides, "--ckpt", "ckpt", "checkpoint run directory");
        add_override(s.cmd, &s.overrides, "--classes", "classes", "comma-separated class list");
        add_override(s.cmd, &s.overrides, "--per-class", "per_class", "held-out items per class");
    }
    {
        Sub& s = subs[4];
        s.cmd = app.add_subcommand("analyze", "kinematic and spectral diagnostics");
        s.run = cmd_analyze;
        add_common(s.cmd, s.common);
        add_override(s.cmd, &s.overrides, "--data", "data", "dataset JSONL path");
        add_override(s.cmd, &s.overrides, "--levels", "levels", "wavelet levels");
    }
    {
        Sub& s = subs[5];
        s.cmd = app.add_subcommand("export", "export a trajectory as pose lines");
        s.run = cmd_export;
        add_common(s.cmd, s.common);
        add_override(s.cmd, &s.overrides, "--data", "data", "dataset JSONL path");
        add_override(s.cmd, &s.overrides, "--id", "id", "record id to export");
        add_override(s.cmd, &s.overrides, "--format", "format", "re10k|jsonl");
    }
    {
        Sub& s = subs[6];
        s.cmd = app.add_subcommand("sweep", "train and evaluate across beta values");
        s.run = cmd_sweep;
        add_common(s.cmd, s.common);
        add_override(s.cmd, &s.overrides, "--data", "data", "dataset JSONL path");
        add_override(s.cmd, &s.overrides, "--betas", "betas", "comma-separated beta list");
        add_override(s.cmd, &s.overrides, "--steps", "steps", "training steps per cell");
    }

    CLI11_PARSE(app, argc, argv);

    for (Sub& s : subs) {
        if (!s.cmd->parsed()) continue;
        try {
            return s.run(s.common, s.overrides);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}
