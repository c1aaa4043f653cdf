#include "rfcn/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rfcn/error.hpp"
#include "rfcn/rng.hpp"

namespace rfcn {

std::pair<double, Tensor> logistic_loss(const Tensor& pred, const Tensor& target, double eps) {
    require_same_shape(pred, target, "logistic_loss");
    for (std::int64_t i = 0; i < target.size(); ++i) {
        if (target[i] != 0.0 && target[i] != 1.0) {
            throw ArgumentError("logistic_loss: target is not binary at index " +
                                std::to_string(i));
        }
    }
    const double n = static_cast<double>(pred.size());
    double acc = 0.0;
    Tensor grad(pred.shape());
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double p = std::min(1.0 - eps, std::max(eps, pred[i]));
        acc -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
        if (pred[i] >= eps && pred[i] <= 1.0 - eps) {
            grad[i] = (-target[i] / p + (1.0 - target[i]) / (1.0 - p)) / n;
        }
    }
    return {acc / n, std::move(grad)};
}

void AdadeltaState::init_like(const std::vector<Model::ParamRef>& params) {
    eg2.clear();
    edx2.clear();
    for (const auto& p : params) {
        eg2.emplace_back(p.tensor->shape());
        edx2.emplace_back(p.tensor->shape());
    }
}

void adadelta_update(Tensor& param, const Tensor& grad, Tensor& eg2, Tensor& edx2, double rho,
                     double eps) {
    require_same_shape(param, grad, "adadelta_update");
    require_same_shape(param, eg2, "adadelta_update accumulators");
    require_same_shape(param, edx2, "adadelta_update accumulators");
    double* x = param.data();
    const double* g = grad.data();
    double* a = eg2.data();
    double* d = edx2.data();
    const std::int64_t n = param.size();
#pragma omp parallel for schedule(static) if (n >= 16384)
    for (std::int64_t i = 0; i < n; ++i) {
        a[i] = rho * a[i] + (1.0 - rho) * g[i] * g[i];
        const double dx = -std::sqrt(d[i] + eps) / std::sqrt(a[i] + eps) * g[i];
        d[i] = rho * d[i] + (1.0 - rho) * dx * dx;
        x[i] += dx;
    }
}

namespace {

Tensor window_target(const Window& w, const Shape& out_shape) {
    return w.target().reshaped(out_shape);
}

MetricsReport evaluate_windows(Model& model, const std::vector<Window>& windows, double threshold,
                               const PredictionSink& sink) {
    std::vector<MetricsReport> reports;
    for (const Window& w : windows) {
        std::vector<Tensor> frames;
        frames.reserve(static_cast<size_t>(w.len));
        for (int i = 0; i < w.len; ++i) frames.push_back(w.frame(i));
        Tensor pred = model.predict(frames);
        const Tensor& gt = w.target();
        reports.push_back(score(pred.reshaped(gt.shape()), gt, threshold));
        if (sink) sink(w, pred);
    }
    return aggregate(reports, AggregateMode::Micro);
}

}  // namespace

MetricsReport evaluate(Model& model, const std::vector<FrameSequence>& sequences, double threshold,
                       const PredictionSink& sink) {
    if (sequences.empty()) throw ArgumentError("evaluate: empty sequence set");
    return evaluate_windows(model, sliding_windows(sequences, model.spec().window), threshold,
                            sink);
}

std::vector<EpochStats> train(Model& model, const DatasetSplit& data, const TrainConfig& cfg,
                              const TrainCallback& cb, AdadeltaState* state_out) {
    if (cfg.window != model.spec().window) {
        throw ArgumentError("train: config window L=" + std::to_string(cfg.window) +
                            " does not match the architecture window L=" +
                            std::to_string(model.spec().window));
    }
    if (data.train.empty()) throw ArgumentError("train: empty training split");
    const std::vector<Window> windows = sliding_windows(data.train, cfg.window);
    if (windows.empty()) throw ArgumentError("train: empty training split");

    const int frozen = cfg.mode == TrainMode::Decoupled
                           ? model.decoupled_boundary()
                           : cfg.freeze_prefix;

    AdadeltaState local_state;
    AdadeltaState& state = state_out ? *state_out : local_state;
    if (state.empty()) {
        state.rho = cfg.rho;
        state.eps = cfg.eps;
        state.init_like(model.registry());
    }

    const ShapeTable& shapes = model.shapes();
    const Shape out_shape = shapes.output;

    std::vector<EpochStats> history;
    std::vector<int> order(windows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng erng(Rng::derive_seed(cfg.seed, "epoch/" + std::to_string(epoch)));
        erng.shuffle(order);
        double loss_sum = 0.0;
        for (int wi : order) {
            const Window& w = windows[static_cast<size_t>(wi)];
            std::vector<Tensor> frames;
            frames.reserve(static_cast<size_t>(w.len));
            for (int i = 0; i < w.len; ++i) frames.push_back(w.frame(i));
            Model::Recorded rec = model.forward_window(frames, frozen);
            Var loss = logistic_loss_op(rec.tape, rec.output, window_target(w, out_shape),
                                        cfg.loss_clamp);
            loss_sum += rec.tape.value(loss)[0];
            rec.tape.backward(loss, Tensor({1}, {1.0}));
            auto& registry = model.registry();
            for (size_t i = 0; i < registry.size(); ++i) {
                if (!rec.param_vars[i].valid()) continue;
                adadelta_update(*registry[i].tensor, rec.tape.grad(rec.param_vars[i]),
                                state.eg2[i], state.edx2[i], state.rho, state.eps);
            }
        }
        EpochStats st;
        st.epoch = epoch;
        st.loss = loss_sum / static_cast<double>(windows.size());
        const bool eval_now = !data.test.empty() &&
                              (epoch % std::max(1, cfg.eval_every) == 0 ||
                               epoch == cfg.max_epochs);
        if (eval_now) {
            st.val = evaluate_windows(model, sliding_windows(data.test, cfg.window),
                                      cfg.threshold, {});
        }
        if (cb) cb(st);
        history.push_back(std::move(st));
    }
    return history;
}

std::vector<EpochStats> train_decoupled(Model& fc_model, Model& rfc_model,
                                        const DatasetSplit& data, const TrainConfig& cfg,
                                        const TrainCallback& cb, AdadeltaState* state_out) {
    copy_shared_prefix_weights(fc_model, rfc_model);
    TrainConfig dcfg = cfg;
    dcfg.mode = TrainMode::Decoupled;
    return train(rfc_model, data, dcfg, cb, state_out);
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'R', 'F', 'C', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw LoadError("truncated checkpoint while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& what) {
    const std::uint32_t n = get_u32(in, what + " length");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw LoadError("truncated checkpoint while reading " + what);
    return s;
}

void put_f64(std::ostream& out, double v) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in, const std::string& what) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw LoadError("truncated checkpoint while reading " + what);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
}

void put_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(out, static_cast<std::uint32_t>(t.extent(i)));
    for (std::int64_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
}

}  // namespace

std::string make_descriptor(const std::string& preset, double scale, int window, int input_c,
                            int input_h, int input_w) {
    std::ostringstream os;
    os << preset << ";scale=" << scale << ";window=" << window << ";input=" << input_c << "x"
       << input_h << "x" << input_w;
    return os.str();
}

ArchitectureSpec spec_from_descriptor(const std::string& descriptor) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream is(descriptor);
    while (std::getline(is, part, ';')) parts.push_back(part);
    if (parts.empty()) throw LoadError("empty checkpoint descriptor");
    const std::string preset = parts[0];
    if (preset == "custom" || preset.rfind("custom", 0) == 0) {
        throw LoadError("checkpoint was built from a custom architecture; pass the architecture "
                        "file explicitly");
    }
    double scale = 1.0;
    int window = 3, ic = 1, ih = 0, iw = 0;
    for (size_t i = 1; i < parts.size(); ++i) {
        const auto eq = parts[i].find('=');
        if (eq == std::string::npos) throw LoadError("malformed descriptor field " + parts[i]);
        const std::string key = parts[i].substr(0, eq), val = parts[i].substr(eq + 1);
        if (key == "scale") {
            scale = std::stod(val);
        } else if (key == "window") {
            window = std::stoi(val);
        } else if (key == "input") {
            if (std::sscanf(val.c_str(), "%dx%dx%d", &ic, &ih, &iw) != 3) {
                throw LoadError("malformed descriptor input size " + val);
            }
        } else {
            throw LoadError("unknown descriptor field " + key);
        }
    }
    std::optional<std::pair<int, int>> hw;
    if (ih > 0 && iw > 0) hw = {ih, iw};
    return build_preset(preset, scale, hw, window);
}

void save_checkpoint(const std::filesystem::path& path, Model& model, const AdadeltaState* state,
                     const std::string& descriptor) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_string(out, descriptor);
    const auto& reg = model.registry();
    const std::uint32_t opt_tensors =
        state && !state->empty() ? static_cast<std::uint32_t>(2 * reg.size()) + 2 : 0;
    put_u32(out, static_cast<std::uint32_t>(reg.size()) + opt_tensors);
    for (const auto& p : reg) put_tensor(out, p.name, *p.tensor);
    if (state && !state->empty()) {
        put_tensor(out, "opt.rho", Tensor({1}, {state->rho}));
        put_tensor(out, "opt.eps", Tensor({1}, {state->eps}));
        for (size_t i = 0; i < reg.size(); ++i) {
            put_tensor(out, "opt.eg2." + reg[i].name, state->eg2[i]);
            put_tensor(out, "opt.edx2." + reg[i].name, state->edx2[i]);
        }
    }
    if (!out) throw IoError("short write for checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw LoadError("bad magic in checkpoint " + path.string());
    }
    const std::uint32_t version = get_u32(in, "version");
    if (version != kVersion) {
        throw LoadError("unsupported checkpoint version " + std::to_string(version) + " in " +
                        path.string());
    }
    Checkpoint ck;
    ck.descriptor = get_string(in, "descriptor");
    const std::uint32_t count = get_u32(in, "tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = get_string(in, "tensor name");
        const std::uint32_t rank = get_u32(in, name + " rank");
        if (rank > 8) throw LoadError("implausible rank for tensor " + name);
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) {
            shape.push_back(static_cast<int>(get_u32(in, name + " extent")));
        }
        Tensor t(shape);
        for (std::int64_t j = 0; j < t.size(); ++j) t[j] = get_f64(in, name + " data");
        ck.tensors.emplace_back(name, std::move(t));
    }
    return ck;
}

Model load_checkpoint_model(const std::filesystem::path& path,
                            std::optional<ArchitectureSpec> custom_spec,
                            AdadeltaState* state_out, std::string* descriptor_out) {
    Checkpoint ck = read_checkpoint(path);
    if (descriptor_out) *descriptor_out = ck.descriptor;
    ArchitectureSpec spec =
        custom_spec ? std::move(*custom_spec) : spec_from_descriptor(ck.descriptor);
    Model model(std::move(spec), 0);

    auto find = [&](const std::string& name) -> const Tensor* {
        for (const auto& [n, t] : ck.tensors) {
            if (n == name) return &t;
        }
        return nullptr;
    };
    for (const auto& p : model.registry()) {
        const Tensor* t = find(p.name);
        if (!t) throw LoadError("checkpoint is missing tensor " + p.name);
        if (t->shape() != p.tensor->shape()) {
            throw LoadError("shape disagreement for " + p.name + ": checkpoint " +
                            t->shape_str() + " vs architecture " + p.tensor->shape_str());
        }
        *p.tensor = *t;
    }
    if (state_out) {
        const Tensor* rho = find("opt.rho");
        const Tensor* eps = find("opt.eps");
        if (rho && eps) {
            state_out->rho = (*rho)[0];
            state_out->eps = (*eps)[0];
            state_out->eg2.clear();
            state_out->edx2.clear();
            for (const auto& p : model.registry()) {
                const Tensor* a = find("opt.eg2." + p.name);
                const Tensor* d = find("opt.edx2." + p.name);
                if (!a || !d) throw LoadError("checkpoint is missing optimizer state for " + p.name);
                if (a->shape() != p.tensor->shape() || d->shape() != p.tensor->shape()) {
                    throw LoadError("shape disagreement for optimizer state of " + p.name);
                }
                state_out->eg2.push_back(*a);
                state_out->edx2.push_back(*d);
            }
        }
    }
    return model;
}

}  // namespace rfcn
