// Command-line front end: synthesis, training, evaluation, prediction,
// gradient checking, and architecture inspection, driven by flags merged
// over flat key=value config files (flags win).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rfcn/check_suite.hpp"
#include "rfcn/config.hpp"
#include "rfcn/data.hpp"
#include "rfcn/error.hpp"
#include "rfcn/image_io.hpp"
#include "rfcn/metrics.hpp"
#include "rfcn/model.hpp"
#include "rfcn/rng.hpp"
#include "rfcn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rfcn;

namespace {

// ---------------------------------------------------------------------------
// Config/flag merging
// ---------------------------------------------------------------------------

void parse_into(const std::string& s, int& v) { v = std::stoi(s); }
void parse_into(const std::string& s, double& v) { v = std::stod(s); }
void parse_into(const std::string& s, std::uint64_t& v) { v = std::stoull(s); }
void parse_into(const std::string& s, std::string& v) { v = s; }
void parse_into(const std::string& s, bool& v) {
    v = s == "1" || s == "true" || s == "yes" || s == "on";
}

std::string cfg_string(int v) { return std::to_string(v); }
std::string cfg_string(std::uint64_t v) { return std::to_string(v); }
std::string cfg_string(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}
std::string cfg_string(const std::string& v) { return v; }
std::string cfg_string(bool v) { return v ? "true" : "false"; }

/// Binds subcommand options so that file values fill anything the command
/// line left unset, and the fully resolved values can be written back out.
class Binder {
public:
    explicit Binder(CLI::App* app) : app_(app) {
        app_->add_option("--config", config_path_, "flat key = value config file (flags win)");
    }

    template <class T>
    CLI::Option* bind(const std::string& key, T& var, const std::string& desc) {
        CLI::Option* opt = app_->add_option("--" + key, var, desc);
        appliers_.push_back([key, &var, opt](const RunConfig& cfg) {
            if (opt->count() == 0 && cfg.has(key)) parse_into(cfg.get(key), var);
        });
        dumpers_.push_back([key, &var](RunConfig& out) { out.set(key, cfg_string(var)); });
        return opt;
    }

    CLI::Option* bind_flag(const std::string& key, bool& var, const std::string& desc) {
        CLI::Option* opt = app_->add_flag("--" + key, var, desc);
        appliers_.push_back([key, &var, opt](const RunConfig& cfg) {
            if (opt->count() == 0 && cfg.has(key)) parse_into(cfg.get(key), var);
        });
        dumpers_.push_back([key, &var](RunConfig& out) { out.set(key, cfg_string(var)); });
        return opt;
    }

    void merge_config() {
        if (config_path_.empty()) return;
        RunConfig cfg = RunConfig::load(config_path_);
        for (auto& f : appliers_) f(cfg);
    }

    RunConfig resolved() const {
        RunConfig out;
        for (const auto& f : dumpers_) f(out);
        return out;
    }

private:
    CLI::App* app_;
    std::string config_path_;
    std::vector<std::function<void(const RunConfig&)>> appliers_;
    std::vector<std::function<void(RunConfig&)>> dumpers_;
};

void require_set(const char* flag, const std::string& value) {
    if (value.empty()) {
        throw ArgumentError(std::string(flag) + " is required (flag or config file)");
    }
}

std::pair<int, int> parse_hw(const std::string& s, const char* what) {
    int h = 0, w = 0;
    if (std::sscanf(s.c_str(), "%dx%d", &h, &w) != 2 || h < 1 || w < 1) {
        throw ArgumentError(std::string(what) + ": expected HxW, got '" + s + "'");
    }
    return {h, w};
}

std::string sanitize_id(std::string id) {
    for (char& c : id) {
        if (c == '/' || c == '\\') c = '-';
    }
    return id;
}

// ---------------------------------------------------------------------------
// Shared model-loading helpers
// ---------------------------------------------------------------------------

struct ModelArgs {
    std::string preset;
    std::string arch_file;
    double scale = 1.0;
    std::string input_hw;  // optional "HxW" override
    int window = 0;        // 0 = architecture default
};

void bind_model_args(Binder& b, ModelArgs& m) {
    b.bind("preset", m.preset, "built-in architecture name");
    b.bind("arch", m.arch_file, "architecture config file");
    b.bind("scale", m.scale, "preset scale in (0,1]");
    b.bind("input", m.input_hw, "input size HxW override");
    b.bind("window", m.window, "sliding window length L");
}

ArchitectureSpec resolve_spec(const ModelArgs& m) {
    if (m.preset.empty() == m.arch_file.empty()) {
        throw ArgumentError("exactly one of --preset or --arch is required");
    }
    std::optional<std::pair<int, int>> hw;
    if (!m.input_hw.empty()) hw = parse_hw(m.input_hw, "--input");
    if (!m.preset.empty()) {
        return build_preset(m.preset, m.scale, hw, m.window > 0 ? m.window : 3);
    }
    ArchitectureSpec spec = load_architecture_file(m.arch_file);
    if (m.window > 0) spec.window = m.window;
    if (hw) {
        spec.input_h = hw->first;
        spec.input_w = hw->second;
        infer_shapes(spec);
    }
    return spec;
}

std::string descriptor_for(const ModelArgs& m, const ArchitectureSpec& spec) {
    if (m.preset.empty()) return "custom;window=" + std::to_string(spec.window);
    return make_descriptor(m.preset, m.scale, spec.window, spec.input_c, spec.input_h,
                           spec.input_w);
}

Model load_model_for_eval(const std::string& checkpoint, const std::string& arch_file,
                          AdadeltaState* state = nullptr) {
    std::optional<ArchitectureSpec> custom;
    if (!arch_file.empty()) custom = load_architecture_file(arch_file);
    return load_checkpoint_model(checkpoint, custom, state);
}

std::vector<FrameSequence> resize_sequences(const std::vector<FrameSequence>& in, int h, int w) {
    std::vector<FrameSequence> out;
    for (const FrameSequence& s : in) {
        FrameSequence r;
        r.id = s.id;
        for (size_t i = 0; i < s.frames.size(); ++i) {
            r.frames.push_back(resize_area(s.frames[i], h, w));
            r.masks.push_back(threshold_labels(resize_area(s.masks[i], h, w), 0.5));
        }
        out.push_back(std::move(r));
    }
    return out;
}

void fit_to_model(std::vector<FrameSequence>& seqs, const ArchitectureSpec& spec,
                  bool resize_allowed) {
    if (seqs.empty()) return;
    const Tensor& f0 = seqs.front().frames.front();
    if (f0.shape() == spec.input_shape()) return;
    if (!resize_allowed) {
        throw DimensionError("dataset frames " + f0.shape_str() +
                             " do not match the architecture input " +
                             shape_to_string(spec.input_shape()) +
                             "; pass --resize-to-input to adapt them");
    }
    seqs = resize_sequences(seqs, spec.input_h, spec.input_w);
}

json metrics_json(const MetricsReport& r) {
    return json{{"tp", r.tp},           {"fp", r.fp},
                {"fn", r.fn},           {"tn", r.tn},
                {"precision", r.precision}, {"recall", r.recall},
                {"f_measure", r.f_measure}, {"iou", r.iou}};
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_synth(Binder& binder, const std::string& out_dir, int seqs, int len,
              const std::string& canvas, int sprites, int vel_min, int vel_max, double tau,
              const std::string& glyphs, int glyph_min, int glyph_max, double noise_salt,
              double noise_salt_min, double transient_prob, int transient_min, int transient_max,
              std::uint64_t seed, const std::string& format) {
    auto [h, w] = parse_hw(canvas, "--canvas");
    if (format != "pgm" && format != "png") {
        throw ArgumentError("--format must be pgm or png");
    }
    fs::create_directories(out_dir);
    std::ostringstream manifest;
    manifest << "# sequences synthesized from one master seed\n";
    for (int i = 0; i < seqs; ++i) {
        MovingSpriteConfig cfg;
        cfg.canvas_h = h;
        cfg.canvas_w = w;
        cfg.length = len;
        cfg.sprite_count = sprites;
        cfg.vel_min = vel_min;
        cfg.vel_max = vel_max;
        cfg.tau = tau;
        cfg.glyph_source = glyphs;
        cfg.glyph_min = glyph_min;
        cfg.glyph_max = glyph_max;
        cfg.noise_salt_prob = noise_salt;
        cfg.noise_salt_min = noise_salt_min;
        cfg.transient_prob = transient_prob;
        cfg.transient_min = transient_min;
        cfg.transient_max = transient_max;
        cfg.seed = Rng::derive_seed(seed, "seq/" + std::to_string(i));
        FrameSequence seq = synthesize_moving_sprites(cfg);
        char name[32];
        std::snprintf(name, sizeof(name), "seq_%03d", i);
        seq.id = name;
        write_sequence_dir(fs::path(out_dir) / name, seq, format);
        manifest << name << ".seed = " << cfg.seed << "\n";
    }
    RunConfig resolved = binder.resolved();
    resolved.write(fs::path(out_dir) / "config.cfg");
    std::ofstream mf(fs::path(out_dir) / "manifest.cfg");
    mf << resolved.serialize() << manifest.str();
    std::cout << "wrote " << seqs << " sequences to " << out_dir << "\n";
    return 0;
}

int cmd_train(Binder& binder, const ModelArgs& margs, const std::string& data_dir,
              const std::string& out_dir, int epochs, std::uint64_t seed,
              const std::string& split_policy, const std::string& mode,
              const std::string& fc_checkpoint, int freeze_prefix, int eval_every,
              double threshold, double rho, double eps, double loss_clamp, bool resize,
              const std::string& precision) {
    if (precision != "f64") {
        throw ArgumentError("--precision: only f64 is implemented (got '" + precision + "')");
    }
    ArchitectureSpec spec = resolve_spec(margs);
    std::vector<FrameSequence> seqs = load_dataset_dir(data_dir);
    fit_to_model(seqs, spec, resize);
    DatasetSplit dsplit = split(seqs, split_policy_from_string(split_policy), seed);

    TrainConfig tcfg;
    tcfg.max_epochs = epochs;
    tcfg.window = spec.window;
    tcfg.seed = seed;
    tcfg.freeze_prefix = freeze_prefix;
    tcfg.eval_every = eval_every;
    tcfg.threshold = threshold;
    tcfg.rho = rho;
    tcfg.eps = eps;
    tcfg.loss_clamp = loss_clamp;
    if (mode == "end_to_end") {
        tcfg.mode = TrainMode::EndToEnd;
    } else if (mode == "decoupled") {
        tcfg.mode = TrainMode::Decoupled;
    } else {
        throw ArgumentError("--mode must be end_to_end or decoupled");
    }

    fs::create_directories(out_dir);
    std::ofstream history(fs::path(out_dir) / "history.jsonl");
    if (!history) throw IoError("cannot write history in " + out_dir);
    TrainCallback cb = [&](const EpochStats& st) {
        json line{{"epoch", st.epoch}, {"loss", st.loss}};
        if (st.val) {
            line["precision"] = st.val->precision;
            line["recall"] = st.val->recall;
            line["f_measure"] = st.val->f_measure;
            line["iou"] = st.val->iou;
        }
        history << line.dump() << "\n";
        history.flush();
    };

    Model model(spec, seed);
    AdadeltaState state;
    std::vector<EpochStats> hist;
    if (tcfg.mode == TrainMode::Decoupled) {
        if (fc_checkpoint.empty()) {
            throw ArgumentError("decoupled mode requires --fc-checkpoint");
        }
        Model fc = load_model_for_eval(fc_checkpoint, "");
        hist = train_decoupled(fc, model, dsplit, tcfg, cb, &state);
    } else {
        hist = train(model, dsplit, tcfg, cb, &state);
    }
    history.close();

    save_checkpoint(fs::path(out_dir) / "checkpoint.ckpt", model, &state,
                    descriptor_for(margs, spec));
    binder.resolved().write(fs::path(out_dir) / "config.cfg");

    json summary{{"epochs", static_cast<int>(hist.size())},
                 {"final_loss", hist.empty() ? 0.0 : hist.back().loss}};
    if (!hist.empty() && hist.back().val) summary["val"] = metrics_json(*hist.back().val);
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& arch_file,
             const std::string& data_dir, const std::string& split_policy,
             const std::string& part, double threshold, const std::string& aggregate_mode,
             bool dump_masks, const std::string& out_dir, std::uint64_t seed, bool resize) {
    Model model = load_model_for_eval(checkpoint, arch_file);
    std::vector<FrameSequence> seqs = load_dataset_dir(data_dir);
    fit_to_model(seqs, model.spec(), resize);
    if (part != "all") {
        DatasetSplit dsplit = split(seqs, split_policy_from_string(split_policy), seed);
        seqs = part == "train" ? dsplit.train : dsplit.test;
    }
    if (seqs.empty() || sliding_windows(seqs, model.spec().window).empty()) {
        throw ArgumentError("eval: the selected split is empty");
    }
    PredictionSink sink;
    if (dump_masks) {
        if (out_dir.empty()) throw ArgumentError("--dump-masks requires --out");
        fs::create_directories(out_dir);
        sink = [&](const Window& w, const Tensor& prob) {
            Tensor mask = threshold_labels(prob.reshaped(w.target().shape()), threshold);
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%04d.pgm", sanitize_id(w.seq->id).c_str(),
                          w.last_index());
            write_pgm(fs::path(out_dir) / name, tensor_to_image(mask));
        };
    }
    const AggregateMode mode =
        aggregate_mode == "macro" ? AggregateMode::Macro : AggregateMode::Micro;
    std::vector<MetricsReport> reports;
    for (const Window& w : sliding_windows(seqs, model.spec().window)) {
        std::vector<Tensor> frames;
        for (int i = 0; i < w.len; ++i) frames.push_back(w.frame(i));
        Tensor pred = model.predict(frames);
        reports.push_back(score(pred.reshaped(w.target().shape()), w.target(), threshold));
        if (sink) sink(w, pred);
    }
    json out = metrics_json(aggregate(reports, mode));
    out["windows"] = static_cast<int>(reports.size());
    out["aggregate"] = aggregate_mode;
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& arch_file,
                const std::vector<std::string>& frame_paths, const std::string& out_path,
                double threshold, bool probabilities) {
    Model model = load_model_for_eval(checkpoint, arch_file);
    if (static_cast<int>(frame_paths.size()) != model.spec().window) {
        throw ArgumentError("predict: the model expects " +
                            std::to_string(model.spec().window) + " frames, got " +
                            std::to_string(frame_paths.size()));
    }
    std::vector<Tensor> frames;
    for (const std::string& p : frame_paths) frames.push_back(image_to_tensor(read_gray_image(p)));
    Tensor prob = model.predict(frames);
    Tensor img = probabilities
                     ? prob.reshaped({model.spec().input_h, model.spec().input_w})
                     : threshold_labels(prob.reshaped({model.spec().input_h,
                                                       model.spec().input_w}),
                                        threshold);
    write_gray_image(out_path, tensor_to_image(img));
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& component, const std::string& inject_fault) {
    CheckOptions opts;
    opts.filter = component;
    opts.inject_fault = inject_fault;
    std::vector<ComponentCheck> checks = run_gradient_checks(opts);
    if (checks.empty()) {
        throw ArgumentError("gradcheck: no component matches '" + component + "'");
    }
    std::cout << render_check_table(checks);
    bool ok = true;
    for (const ComponentCheck& c : checks) {
        if (!c.pass) {
            ok = false;
            std::cout << "gradient check failed: " << c.name << "\n";
        }
    }
    return ok ? 0 : 1;
}

int cmd_inspect(const ModelArgs& margs, bool emit_config) {
    std::vector<ArchitectureSpec> specs;
    if (margs.preset.empty() && margs.arch_file.empty()) {
        for (const std::string& name : preset_names()) {
            specs.push_back(build_preset(name, margs.scale,
                                         margs.input_hw.empty()
                                             ? std::nullopt
                                             : std::optional(parse_hw(margs.input_hw, "--input")),
                                         margs.window > 0 ? margs.window : 3));
        }
    } else {
        specs.push_back(resolve_spec(margs));
    }
    for (const ArchitectureSpec& spec : specs) {
        if (emit_config) {
            std::cout << to_config_text(spec) << "\n";
            continue;
        }
        ShapeTable table = infer_shapes(spec);
        std::cout << "== " << spec.name << " (window L=" << spec.window << ") ==\n"
                  << table.render() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"recurrent fully convolutional networks for online video segmentation"};
    app.require_subcommand(1);

    // --- synth ---
    CLI::App* synth = app.add_subcommand("synth", "synthesize a moving-sprite dataset");
    Binder synth_b(synth);
    std::string s_out, s_canvas = "64x64", s_glyphs, s_format = "pgm";
    int s_seqs = 8, s_len = 20, s_sprites = 2, s_vmin = 1, s_vmax = 2;
    int s_glyph_min = 10, s_glyph_max = 14;
    double s_tau = 0.5, s_salt = 0.0, s_salt_min = 0.6, s_transient = 0.0;
    int s_tr_min = 8, s_tr_max = 12;
    std::uint64_t s_seed = 0;
    synth_b.bind("out", s_out, "output dataset directory");
    synth_b.bind("seqs", s_seqs, "number of sequences")->check(CLI::PositiveNumber);
    synth_b.bind("len", s_len, "frames per sequence")->check(CLI::PositiveNumber);
    synth_b.bind("canvas", s_canvas, "canvas size HxW");
    synth_b.bind("sprites", s_sprites, "sprites per sequence");
    synth_b.bind("vel-min", s_vmin, "minimum per-axis speed");
    synth_b.bind("vel-max", s_vmax, "maximum per-axis speed");
    synth_b.bind("tau", s_tau, "label threshold");
    synth_b.bind("glyphs", s_glyphs, "IDX glyph file (empty = procedural)");
    synth_b.bind("glyph-min", s_glyph_min, "procedural glyph minimum size");
    synth_b.bind("glyph-max", s_glyph_max, "procedural glyph maximum size");
    synth_b.bind("noise-salt", s_salt, "per-pixel bright-speck probability");
    synth_b.bind("noise-salt-min", s_salt_min, "minimum speck intensity");
    synth_b.bind("transient", s_transient, "per-frame probability of a one-frame flash glyph");
    synth_b.bind("transient-min", s_tr_min, "flash glyph minimum size");
    synth_b.bind("transient-max", s_tr_max, "flash glyph maximum size");
    synth_b.bind("seed", s_seed, "master seed");
    synth_b.bind("format", s_format, "image format: pgm or png");

    // --- train ---
    CLI::App* tr = app.add_subcommand("train", "train a model on a dataset directory");
    Binder tr_b(tr);
    ModelArgs tr_m;
    bind_model_args(tr_b, tr_m);
    std::string t_data, t_out, t_split = "half", t_mode = "end_to_end", t_fc, t_precision = "f64";
    int t_epochs = 500, t_freeze = 0, t_eval_every = 1;
    std::uint64_t t_seed = 0;
    double t_threshold = 0.5, t_rho = 0.95, t_eps = 1e-6, t_clamp = 1e-7;
    bool t_resize = false;
    tr_b.bind("data", t_data, "dataset directory");
    tr_b.bind("out", t_out, "output directory");
    tr_b.bind("epochs", t_epochs, "training epochs (cap 500)")->check(CLI::Range(0, 500));
    tr_b.bind("seed", t_seed, "master seed");
    tr_b.bind("split", t_split, "split policy: half or 70/30");
    tr_b.bind("mode", t_mode, "end_to_end or decoupled");
    tr_b.bind("fc-checkpoint", t_fc, "trained baseline checkpoint for decoupled mode");
    tr_b.bind("freeze-prefix", t_freeze, "freeze the first N layers");
    tr_b.bind("eval-every", t_eval_every, "validation cadence in epochs");
    tr_b.bind("threshold", t_threshold, "binarization threshold for metrics");
    tr_b.bind("rho", t_rho, "Adadelta decay");
    tr_b.bind("eps", t_eps, "Adadelta conditioning constant");
    tr_b.bind("loss-clamp", t_clamp, "probability clamp for the logistic loss");
    tr_b.bind("precision", t_precision, "scalar precision (f64)");
    tr_b.bind_flag("resize-to-input", t_resize, "area-resample frames to the model input size");

    // --- eval ---
    CLI::App* ev = app.add_subcommand("eval", "score a checkpoint on a dataset");
    Binder ev_b(ev);
    std::string e_ckpt, e_arch, e_data, e_split = "half", e_part = "test", e_agg = "micro", e_out;
    double e_threshold = 0.5;
    bool e_dump = false, e_resize = false;
    std::uint64_t e_seed = 0;
    ev_b.bind("checkpoint", e_ckpt, "checkpoint file");
    ev_b.bind("arch", e_arch, "architecture file (for custom checkpoints)");
    ev_b.bind("data", e_data, "dataset directory");
    ev_b.bind("split", e_split, "split policy: half or 70/30");
    ev_b.bind("part", e_part, "train, test, or all");
    ev_b.bind("threshold", e_threshold, "binarization threshold");
    ev_b.bind("aggregate", e_agg, "micro or macro");
    ev_b.bind("out", e_out, "output directory for dumped masks");
    ev_b.bind("seed", e_seed, "seed for the 70/30 split shuffle");
    ev_b.bind_flag("dump-masks", e_dump, "write one predicted mask per window");
    ev_b.bind_flag("resize-to-input", e_resize, "area-resample frames to the model input size");

    // --- predict ---
    CLI::App* pr = app.add_subcommand("predict", "segment a single window of frames");
    Binder pr_b(pr);
    std::string p_ckpt, p_arch, p_out = "mask.pgm";
    std::vector<std::string> p_frames;
    double p_threshold = 0.5;
    bool p_prob = false;
    pr_b.bind("checkpoint", p_ckpt, "checkpoint file");
    pr_b.bind("arch", p_arch, "architecture file (for custom checkpoints)");
    pr->add_option("--frames", p_frames, "window frames, oldest first")->required();
    pr_b.bind("out", p_out, "output mask path (.pgm/.png)");
    pr_b.bind("threshold", p_threshold, "binarization threshold");
    pr_b.bind_flag("probabilities", p_prob, "write the probability map instead of a mask");

    // --- gradcheck ---
    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    Binder gc_b(gc);
    std::string g_component, g_fault;
    gc_b.bind("component", g_component, "check only components whose name contains this");
    gc_b.bind("inject-fault", g_fault, "testing aid: corrupt the named component's gradient");

    // --- inspect ---
    CLI::App* in = app.add_subcommand("inspect", "print per-layer shape tables");
    Binder in_b(in);
    ModelArgs in_m;
    bind_model_args(in_b, in_m);
    bool i_emit = false;
    in_b.bind_flag("emit-config", i_emit, "print the architecture config text instead");

    try {
        app.parse(argc, argv);
        if (synth->parsed()) {
            synth_b.merge_config();
            require_set("--out", s_out);
            return cmd_synth(synth_b, s_out, s_seqs, s_len, s_canvas, s_sprites, s_vmin, s_vmax,
                             s_tau, s_glyphs, s_glyph_min, s_glyph_max, s_salt, s_salt_min,
                             s_transient, s_tr_min, s_tr_max, s_seed, s_format);
        }
        if (tr->parsed()) {
            tr_b.merge_config();
            require_set("--data", t_data);
            require_set("--out", t_out);
            return cmd_train(tr_b, tr_m, t_data, t_out, t_epochs, t_seed, t_split, t_mode, t_fc,
                             t_freeze, t_eval_every, t_threshold, t_rho, t_eps, t_clamp, t_resize,
                             t_precision);
        }
        if (ev->parsed()) {
            ev_b.merge_config();
            require_set("--checkpoint", e_ckpt);
            require_set("--data", e_data);
            return cmd_eval(e_ckpt, e_arch, e_data, e_split, e_part, e_threshold, e_agg, e_dump,
                            e_out, e_seed, e_resize);
        }
        if (pr->parsed()) {
            pr_b.merge_config();
            require_set("--checkpoint", p_ckpt);
            return cmd_predict(p_ckpt, p_arch, p_frames, p_out, p_threshold, p_prob);
        }
        if (gc->parsed()) {
            gc_b.merge_config();
            return cmd_gradcheck(g_component, g_fault);
        }
        if (in->parsed()) {
            in_b.merge_config();
            return cmd_inspect(in_m, i_emit);
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors exit 1, --help exits 0
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
