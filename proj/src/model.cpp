#include "rfcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rfcn/error.hpp"
#include "rfcn/init.hpp"
#include "rfcn/kernels.hpp"

namespace rfcn {

using kernels::Conv2dGeom;
using kernels::Pool2dGeom;

std::string LayerSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case LayerKind::Conv:
            os << "conv F=" << f << " S=" << s << " P=" << p << " D=" << d;
            break;
        case LayerKind::Relu:
            os << "relu";
            break;
        case LayerKind::Pool:
            os << "pool " << f;
            break;
        case LayerKind::Deconv:
            os << "deconv F=" << f << " S=" << s;
            break;
        case LayerKind::Flatten:
            os << "flatten";
            break;
        case LayerKind::Dense:
            os << "dense OUT=" << out;
            break;
        case LayerKind::Gru:
            os << "gru";
            if (out > 0) os << " H=" << out;
            break;
        case LayerKind::ConvGru:
            os << "convgru F=" << f << " D=" << d;
            break;
        case LayerKind::Sigmoid:
            os << "sigmoid";
            break;
        case LayerKind::Reshape:
            os << "reshape";
            for (size_t i = 0; i < target.size(); ++i) os << (i ? "x" : " ") << target[i];
            break;
    }
    return os.str();
}

int ArchitectureSpec::recurrent_index() const {
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::Gru || layers[i].kind == LayerKind::ConvGru) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

void ArchitectureSpec::validate() const {
    if (input_c < 1 || input_h < 1 || input_w < 1) {
        throw ArgumentError("architecture " + name + ": input size not set");
    }
    if (window < 1) throw ArgumentError("architecture " + name + ": window must be >= 1");
    int recurrent_count = 0;
    for (const LayerSpec& l : layers) {
        if (l.kind == LayerKind::Gru || l.kind == LayerKind::ConvGru) ++recurrent_count;
    }
    if (recurrent_count > 1) {
        throw ArgumentError("architecture " + name + ": more than one recurrent layer");
    }
    const int r = recurrent_index();
    if (r >= 0) {
        if (!layers[static_cast<size_t>(r)].inside_recurrent_node) {
            throw ArgumentError("architecture " + name +
                                ": the recurrent layer must sit inside the recurrent node");
        }
        for (size_t i = static_cast<size_t>(r) + 1; i < layers.size(); ++i) {
            if (layers[i].inside_recurrent_node) {
                throw ArgumentError("architecture " + name +
                                    ": layers inside the recurrent node must precede the "
                                    "recurrent layer");
            }
        }
    }
}

namespace {

std::int64_t layer_param_count(const LayerSpec& l, const Shape& in) {
    switch (l.kind) {
        case LayerKind::Conv:
            return static_cast<std::int64_t>(l.d) * in[0] * l.f * l.f + l.d;
        case LayerKind::Deconv:
            return static_cast<std::int64_t>(in[0]) * in[0] * l.f * l.f;
        case LayerKind::Dense:
            return static_cast<std::int64_t>(l.out) * shape_numel(in) + l.out;
        case LayerKind::Gru: {
            const std::int64_t m = shape_numel(in);
            const std::int64_t n = l.out > 0 ? l.out : m;
            return 3 * (n * n + n * m + n);
        }
        case LayerKind::ConvGru: {
            const std::int64_t c = in[0], ff = l.d;
            return 3 * (ff * ff + ff * c) * l.f * l.f + 3 * ff;
        }
        default:
            return 0;
    }
}

}  // namespace

ShapeTable infer_shapes(const ArchitectureSpec& spec) {
    spec.validate();
    ShapeTable table;
    table.input = spec.input_shape();
    Shape cur = table.input;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        ShapeRow row;
        row.layer = l.describe();
        row.in = cur;
        row.note = l.note;
        auto fail = [&](const std::string& why) {
            throw DimensionError("layer " + std::to_string(i) + " (" + l.describe() +
                                 "): " + why + "; incoming shape " + shape_to_string(cur));
        };
        auto infer_conv = [&]() {
            try {
                return Conv2dGeom::infer(cur, {l.d, cur[0], l.f, l.f}, l.s, l.p);
            } catch (const std::runtime_error& e) {
                fail(e.what());
                throw;  // unreachable
            }
        };
        auto infer_pool = [&]() {
            try {
                return Pool2dGeom::infer(cur, l.f, l.f);
            } catch (const std::runtime_error& e) {
                fail(e.what());
                throw;  // unreachable
            }
        };
        {
            switch (l.kind) {
                case LayerKind::Conv: {
                    Conv2dGeom g = infer_conv();
                    cur = {g.out_c, g.out_h, g.out_w};
                    break;
                }
                case LayerKind::Relu:
                case LayerKind::Sigmoid:
                    break;
                case LayerKind::Pool: {
                    if (cur.size() != 3) fail("pool expects a CxHxW input");
                    Pool2dGeom g = infer_pool();
                    cur = {g.c, g.out_h, g.out_w};
                    break;
                }
                case LayerKind::Deconv: {
                    if (cur.size() != 3) fail("deconv expects a CxHxW input");
                    const int raw_h = (cur[1] - 1) * l.s + l.f;
                    const int raw_w = (cur[2] - 1) * l.s + l.f;
                    if (raw_h < spec.input_h || raw_w < spec.input_w) {
                        fail("upsampled extent " + std::to_string(raw_h) + "x" +
                             std::to_string(raw_w) + " cannot cover the input size " +
                             std::to_string(spec.input_h) + "x" + std::to_string(spec.input_w));
                    }
                    if (!row.note.empty()) row.note += "; ";
                    row.note += "crop " + std::to_string(raw_h - spec.input_h) + "x" +
                                std::to_string(raw_w - spec.input_w) + " of " +
                                std::to_string(raw_h) + "x" + std::to_string(raw_w);
                    cur = {cur[0], spec.input_h, spec.input_w};
                    break;
                }
                case LayerKind::Flatten:
                    cur = {static_cast<int>(shape_numel(cur))};
                    break;
                case LayerKind::Dense:
                    if (cur.size() != 1) fail("dense expects a flattened input");
                    cur = {l.out};
                    break;
                case LayerKind::Gru: {
                    if (cur.size() != 1) fail("gru expects a flattened input");
                    cur = {l.out > 0 ? l.out : cur[0]};
                    break;
                }
                case LayerKind::ConvGru: {
                    if (cur.size() != 3) fail("convgru expects a CxHxW input");
                    if (l.f % 2 == 0) fail("convgru kernel must be odd");
                    cur = {l.d, cur[1], cur[2]};
                    break;
                }
                case LayerKind::Reshape: {
                    if (shape_numel(l.target) != shape_numel(cur)) {
                        fail("reshape to " + shape_to_string(l.target) +
                             " changes the element count");
                    }
                    cur = l.target;
                    break;
                }
            }
        }
        row.out = cur;
        row.param_count = layer_param_count(l, row.in);
        table.total_params += row.param_count;
        table.rows.push_back(std::move(row));
    }
    table.output = cur;
    return table;
}

std::string ShapeTable::render() const {
    std::ostringstream os;
    os << "input " << shape_to_string(input) << "\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        const ShapeRow& r = rows[i];
        os << "  L" << (i < 10 ? "0" : "") << i << "  " << r.layer << "  " << shape_to_string(r.in)
           << " -> " << shape_to_string(r.out);
        if (r.param_count > 0) os << "  params=" << r.param_count;
        if (!r.note.empty()) os << "  [" << r.note << "]";
        os << "\n";
    }
    os << "output " << shape_to_string(output) << "  total params " << total_params << "\n";
    return os.str();
}

namespace {

int scaled(int v, double s, int lo) { return std::max(lo, static_cast<int>(std::lround(v * s))); }

int scaled_odd_kernel(int v, double s) {
    int k = std::max(3, static_cast<int>(std::lround(v * s)));
    if (k % 2 == 0) ++k;
    return k;
}

struct PresetBuilder {
    ArchitectureSpec spec;
    Shape cur;
    int downsample = 1;
    bool in_node = false;

    explicit PresetBuilder(std::string name, int c, int h, int w, int window) {
        spec.name = std::move(name);
        spec.input_c = c;
        spec.input_h = h;
        spec.input_w = w;
        spec.window = window;
        cur = {c, h, w};
    }

    void begin_node() { in_node = true; }
    void end_node() { in_node = false; }

    LayerSpec& push(LayerSpec l) {
        l.inside_recurrent_node = in_node;
        spec.layers.push_back(std::move(l));
        LayerSpec& ref = spec.layers.back();
        // Track shapes with the same arithmetic as infer_shapes.
        switch (ref.kind) {
            case LayerKind::Conv: {
                Conv2dGeom g = Conv2dGeom::infer(cur, {ref.d, cur[0], ref.f, ref.f}, ref.s, ref.p);
                cur = {g.out_c, g.out_h, g.out_w};
                downsample *= ref.s;
                break;
            }
            case LayerKind::Pool: {
                Pool2dGeom g = Pool2dGeom::infer(cur, ref.f, ref.f);
                cur = {g.c, g.out_h, g.out_w};
                downsample *= ref.f;
                break;
            }
            case LayerKind::Deconv:
                cur = {cur[0], spec.input_h, spec.input_w};
                break;
            case LayerKind::Flatten:
                cur = {static_cast<int>(shape_numel(cur))};
                break;
            case LayerKind::Dense:
                cur = {ref.out};
                break;
            case LayerKind::Gru:
                cur = {ref.out > 0 ? ref.out : cur[0]};
                break;
            case LayerKind::ConvGru:
                cur = {ref.d, cur[1], cur[2]};
                break;
            case LayerKind::Reshape:
                cur = ref.target;
                break;
            default:
                break;
        }
        return ref;
    }

    // Same-padded convolution: the published per-column paddings cannot keep
    // Table 1's chains consistent under the committed P(n)-total convention,
    // so presets pad every convolution to F-1 total and record the published
    // notation alongside.
    void conv(int f, int stride, int d, const std::string& published) {
        LayerSpec l;
        l.kind = LayerKind::Conv;
        l.f = f;
        l.s = stride;
        l.p = f - 1;
        l.d = d;
        l.note = published;
        push(std::move(l));
    }

    void relu() {
        LayerSpec l;
        l.kind = LayerKind::Relu;
        push(std::move(l));
    }

    void pool(int k) {
        LayerSpec l;
        l.kind = LayerKind::Pool;
        l.f = k;
        push(std::move(l));
    }

    // Upsampling stride equals the chain's accumulated downsampling factor;
    // the kernel is the larger of twice the stride and the published size.
    void deconv(int published_f, const std::string& published) {
        LayerSpec l;
        l.kind = LayerKind::Deconv;
        l.s = downsample;
        l.f = std::max(2 * downsample, published_f);
        l.note = published;
        push(std::move(l));
    }

    void flatten() {
        LayerSpec l;
        l.kind = LayerKind::Flatten;
        push(std::move(l));
    }

    void dense(int out, const std::string& note = "") {
        LayerSpec l;
        l.kind = LayerKind::Dense;
        l.out = out;
        l.note = note;
        push(std::move(l));
    }

    void gru(int hidden, const std::string& published) {
        LayerSpec l;
        l.kind = LayerKind::Gru;
        l.out = hidden;
        l.note = published;
        push(std::move(l));
    }

    void conv_gru(int f, int d, const std::string& published) {
        LayerSpec l;
        l.kind = LayerKind::ConvGru;
        l.f = f;
        l.d = d;
        l.note = published;
        push(std::move(l));
    }

    void reshape_to(Shape s) {
        LayerSpec l;
        l.kind = LayerKind::Reshape;
        l.target = std::move(s);
        push(std::move(l));
    }

    void sigmoid() {
        LayerSpec l;
        l.kind = LayerKind::Sigmoid;
        push(std::move(l));
    }
};

void drop_recurrent(ArchitectureSpec& spec) {
    const int r = spec.recurrent_index();
    if (r >= 0) spec.layers.erase(spec.layers.begin() + r);
    for (LayerSpec& l : spec.layers) l.inside_recurrent_node = false;
}

}  // namespace

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"rfc-lenet", "rfc-12s", "rfc-vgg",
                                                   "fc-lenet",  "fc-12s",  "fc-vgg"};
    return names;
}

ArchitectureSpec build_preset(const std::string& name, double scale,
                              std::optional<std::pair<int, int>> input_hw, int window) {
    if (!(scale > 0.0) || scale > 1.0) {
        throw ArgumentError("preset scale must lie in (0,1], got " + std::to_string(scale));
    }
    std::string base = name;
    bool baseline = false;
    if (base.rfind("fc-", 0) == 0) {
        baseline = true;
        base = "rfc-" + base.substr(3);
    }

    ArchitectureSpec spec;
    if (base == "rfc-lenet") {
        const int h = input_hw ? input_hw->first : scaled(28, scale, 8);
        const int w = input_hw ? input_hw->second : scaled(28, scale, 8);
        PresetBuilder b(name, 1, h, w, window);
        b.begin_node();
        b.conv(scaled_odd_kernel(5, scale), 1, scaled(20, scale, 1), "Conv: F(5), P(10), D(20)");
        b.relu();
        b.pool(scaled(2, scale, 2));
        b.conv(5, 1, scaled(50, scale, 1), "Conv: F(5), D(50)");
        b.relu();
        b.pool(scaled(2, scale, 2));
        b.conv(3, 1, scaled(500, scale, 1), "Conv: F(3), D(500)");
        b.relu();
        b.conv(1, 1, 1, "Conv: F(1), D(1)");
        b.deconv(static_cast<int>(std::lround(10 * scale)), "DeConv: F(10), S(4)");
        b.flatten();
        b.gru(0, "GRU: W(784x784)");  // hidden = flattened dense-prediction size
        b.end_node();
        b.reshape_to({1, h, w});
        // The gated state is a convex blend bounded in (-1,1); a shared
        // per-pixel affine lets the terminal sigmoid reach confident
        // probabilities.
        b.conv(1, 1, 1, "logit scaling (not in the published table)");
        b.sigmoid();
        spec = std::move(b.spec);
    } else if (base == "rfc-12s") {
        const int h = input_hw ? input_hw->first : scaled(120, scale, 8);
        const int w = input_hw ? input_hw->second : scaled(180, scale, 8);
        PresetBuilder b(name, 1, h, w, window);
        b.begin_node();
        b.conv(scaled_odd_kernel(5, scale), scaled(3, scale, 1), scaled(20, scale, 1),
               "Conv: F(5), S(3), P(10), D(20)");
        b.relu();
        b.pool(scaled(2, scale, 2));
        b.conv(5, 1, scaled(50, scale, 1), "Conv: F(5), D(50)");
        b.relu();
        b.pool(scaled(2, scale, 2));
        b.conv(3, 1, scaled(500, scale, 1), "Conv: F(3), D(500)");
        b.relu();
        b.conv(1, 1, 1, "Conv: F(1), D(1)");
        const Shape coarse = b.cur;
        b.flatten();
        const int hidden = scaled(100, scale, 1);
        b.dense(hidden, "projection to the GRU width");
        b.gru(hidden, "GRU: W(100x100)");
        b.end_node();
        b.dense(static_cast<int>(shape_numel(coarse)), "projection back to the coarse map");
        b.reshape_to(coarse);
        b.deconv(static_cast<int>(std::lround(10 * scale)), "DeConv: F(10), S(4)");
        b.sigmoid();
        spec = std::move(b.spec);
    } else if (base == "rfc-vgg") {
        const int h = input_hw ? input_hw->first : scaled(240, scale, 8);
        const int w = input_hw ? input_hw->second : scaled(360, scale, 8);
        PresetBuilder b(name, 1, h, w, window);
        b.begin_node();
        b.conv(scaled_odd_kernel(11, scale), scaled(4, scale, 1), scaled(64, scale, 1),
               "Conv: F(11), S(4), P(40), D(64)");
        b.relu();
        b.pool(scaled(3, scale, 2));
        b.conv(5, 1, scaled(256, scale, 1), "Conv: F(5), P(2), D(256)");
        b.relu();
        b.pool(scaled(3, scale, 2));
        b.conv(3, 1, scaled(256, scale, 1), "Conv: F(3), P(1), D(256)");
        b.relu();
        b.conv(3, 1, scaled(256, scale, 1), "Conv: F(3), P(1), D(256)");
        b.relu();
        b.conv(3, 1, scaled(256, scale, 1), "Conv: F(3), P(1), D(256)");
        b.relu();
        b.conv(3, 1, scaled(512, scale, 1), "Conv: F(3), D(512)");
        b.conv(3, 1, scaled(128, scale, 1), "Conv: F(3), D(128)");
        b.conv_gru(3, scaled(128, scale, 1), "ConvGRU: F(3), D(128)");
        b.end_node();
        b.conv(1, 1, 1, "Conv: F(1), D(1)");
        b.deconv(static_cast<int>(std::lround(20 * scale)), "DeConv: F(20), S(8)");
        b.sigmoid();
        spec = std::move(b.spec);
    } else {
        std::string valid;
        for (const std::string& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
        throw ArgumentError("unknown preset '" + name + "' (valid: " + valid + ")");
    }

    if (baseline) drop_recurrent(spec);
    infer_shapes(spec);  // fail early if the chain is inconsistent
    return spec;
}

// ---------------------------------------------------------------------------
// Architecture config text
// ---------------------------------------------------------------------------

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

Shape parse_dims(const std::string& tok, const std::string& where) {
    Shape dims;
    std::string part;
    for (char c : tok + "x") {
        if (c == 'x') {
            if (part.empty()) throw ArgumentError(where + ": malformed size '" + tok + "'");
            dims.push_back(std::stoi(part));
            part.clear();
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            part += c;
        } else {
            throw ArgumentError(where + ": malformed size '" + tok + "'");
        }
    }
    return dims;
}

struct KeyValues {
    std::vector<std::pair<std::string, int>> kv;
    int get(const std::string& key, int fallback, bool required, const std::string& where) {
        for (auto& [k, v] : kv) {
            if (k == key) return v;
        }
        if (required) throw ArgumentError(where + ": missing key " + key);
        return fallback;
    }
    void reject_unknown(const std::vector<std::string>& known, const std::string& where) const {
        for (const auto& [k, v] : kv) {
            if (std::find(known.begin(), known.end(), k) == known.end()) {
                throw ArgumentError(where + ": unknown key '" + k + "'");
            }
        }
    }
};

KeyValues parse_kv(const std::vector<std::string>& toks, size_t from, const std::string& where) {
    KeyValues out;
    for (size_t i = from; i < toks.size(); ++i) {
        const auto eq = toks[i].find('=');
        if (eq == std::string::npos) {
            throw ArgumentError(where + ": expected key=value, got '" + toks[i] + "'");
        }
        try {
            out.kv.emplace_back(lower(toks[i].substr(0, eq)), std::stoi(toks[i].substr(eq + 1)));
        } catch (const std::exception&) {
            throw ArgumentError(where + ": malformed value in '" + toks[i] + "'");
        }
    }
    return out;
}

}  // namespace

ArchitectureSpec parse_architecture(const std::string& text, const std::string& origin) {
    ArchitectureSpec spec;
    spec.name = "custom";
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    bool in_node = false, seen_node = false;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string where = origin + ":" + std::to_string(line_no);
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        std::istringstream ls(raw);
        std::vector<std::string> toks;
        std::string tok;
        while (ls >> tok) toks.push_back(lower(tok));
        if (toks.empty()) continue;
        const std::string& head = toks[0];

        if (head == "@recurrent-node-begin") {
            if (seen_node) throw ArgumentError(where + ": duplicate @recurrent-node-begin");
            in_node = seen_node = true;
            continue;
        }
        if (head == "@recurrent-node-end") {
            if (!in_node) throw ArgumentError(where + ": @recurrent-node-end without begin");
            in_node = false;
            continue;
        }
        if (head == "input") {
            if (toks.size() != 2) throw ArgumentError(where + ": usage: input [C x]H x W");
            Shape dims = parse_dims(toks[1], where);
            if (dims.size() == 2) {
                spec.input_c = 1;
                spec.input_h = dims[0];
                spec.input_w = dims[1];
            } else if (dims.size() == 3) {
                spec.input_c = dims[0];
                spec.input_h = dims[1];
                spec.input_w = dims[2];
            } else {
                throw ArgumentError(where + ": input must be HxW or CxHxW");
            }
            continue;
        }
        if (head == "window") {
            if (toks.size() != 2) throw ArgumentError(where + ": usage: window L");
            spec.window = std::stoi(toks[1]);
            continue;
        }

        LayerSpec l;
        l.inside_recurrent_node = in_node;
        if (head == "conv") {
            KeyValues kv = parse_kv(toks, 1, where);
            kv.reject_unknown({"f", "s", "p", "d"}, where);
            l.kind = LayerKind::Conv;
            l.f = kv.get("f", 0, true, where);
            l.s = kv.get("s", 1, false, where);
            l.p = kv.get("p", 0, false, where);
            l.d = kv.get("d", 0, true, where);
        } else if (head == "relu") {
            l.kind = LayerKind::Relu;
        } else if (head == "sigmoid") {
            l.kind = LayerKind::Sigmoid;
        } else if (head == "flatten") {
            l.kind = LayerKind::Flatten;
        } else if (head == "pool") {
            if (toks.size() != 2) throw ArgumentError(where + ": usage: pool K");
            l.kind = LayerKind::Pool;
            l.f = std::stoi(toks[1]);
        } else if (head == "deconv") {
            KeyValues kv = parse_kv(toks, 1, where);
            kv.reject_unknown({"f", "s"}, where);
            l.kind = LayerKind::Deconv;
            l.f = kv.get("f", 0, true, where);
            l.s = kv.get("s", 0, true, where);
        } else if (head == "dense") {
            KeyValues kv = parse_kv(toks, 1, where);
            kv.reject_unknown({"out"}, where);
            l.kind = LayerKind::Dense;
            l.out = kv.get("out", 0, true, where);
        } else if (head == "gru") {
            KeyValues kv = parse_kv(toks, 1, where);
            kv.reject_unknown({"h"}, where);
            l.kind = LayerKind::Gru;
            l.out = kv.get("h", 0, false, where);
        } else if (head == "convgru") {
            KeyValues kv = parse_kv(toks, 1, where);
            kv.reject_unknown({"f", "d"}, where);
            l.kind = LayerKind::ConvGru;
            l.f = kv.get("f", 0, true, where);
            l.d = kv.get("d", 0, true, where);
        } else if (head == "reshape") {
            if (toks.size() != 2) throw ArgumentError(where + ": usage: reshape CxHxW");
            l.kind = LayerKind::Reshape;
            l.target = parse_dims(toks[1], where);
        } else {
            throw ArgumentError(where + ": unknown layer '" + head + "'");
        }
        spec.layers.push_back(std::move(l));
    }
    if (in_node) throw ArgumentError(origin + ": unterminated @recurrent-node-begin");
    spec.validate();
    return spec;
}

ArchitectureSpec load_architecture_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open architecture file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    ArchitectureSpec spec = parse_architecture(buf.str(), path.filename().string());
    spec.name = path.stem().string();
    return spec;
}

std::string to_config_text(const ArchitectureSpec& spec) {
    std::ostringstream os;
    os << "# architecture: " << spec.name << "\n";
    os << "input " << spec.input_c << "x" << spec.input_h << "x" << spec.input_w << "\n";
    os << "window " << spec.window << "\n";
    bool in_node = false;
    for (const LayerSpec& l : spec.layers) {
        if (l.inside_recurrent_node && !in_node) {
            os << "@recurrent-node-begin\n";
            in_node = true;
        }
        if (!l.inside_recurrent_node && in_node) {
            os << "@recurrent-node-end\n";
            in_node = false;
        }
        os << l.describe() << "\n";
    }
    if (in_node) os << "@recurrent-node-end\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

Model::Model(ArchitectureSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    shapes_ = infer_shapes(spec_);
    Rng rng(Rng::derive_seed(seed, "init/" + spec_.name));
    params_.resize(spec_.layers.size());
    for (size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const Shape& in = shapes_.rows[i].in;
        LayerParams& p = params_[i];
        std::ostringstream prefix;
        prefix << "L" << (i < 10 ? "0" : "") << i;
        auto reg = [&](const std::string& field, Tensor& t) {
            registry_.push_back({prefix.str() + "." + field, &t});
        };
        switch (l.kind) {
            case LayerKind::Conv: {
                const int c = in[0];
                p.w = glorot_uniform(rng, {l.d, c, l.f, l.f}, c * l.f * l.f, l.d * l.f * l.f);
                p.b = Tensor({l.d});
                reg("conv.w", p.w);
                reg("conv.b", p.b);
                break;
            }
            case LayerKind::Deconv: {
                const int c = in[0];
                p.w = bilinear_deconv_kernel(c, c, l.f, l.f, l.s);
                reg("deconv.w", p.w);
                break;
            }
            case LayerKind::Dense: {
                const int m = l.out, n = static_cast<int>(shape_numel(in));
                p.w = glorot_uniform(rng, {m, n}, n, m);
                p.b = Tensor({m});
                reg("dense.w", p.w);
                reg("dense.b", p.b);
                break;
            }
            case LayerKind::Gru: {
                const int m = static_cast<int>(shape_numel(in));
                const int n = l.out > 0 ? l.out : m;
                p.gru = GruParams::init(rng, n, m);
                if (m == n) {
                    // Flattened-map recurrences start as per-pixel temporal
                    // filters: identity weights pass the heat map through
                    // unscrambled, and training refines the off-diagonals.
                    for (Tensor* w : {&p.gru->w_hz, &p.gru->w_hr, &p.gru->w_h, &p.gru->w_xz,
                                      &p.gru->w_xr, &p.gru->w_x}) {
                        w->fill(0.0);
                        for (int d = 0; d < n; ++d) w->at(d, d) = 1.0;
                    }
                }
                reg("gru.w_hz", p.gru->w_hz);
                reg("gru.w_xz", p.gru->w_xz);
                reg("gru.b_z", p.gru->b_z);
                reg("gru.w_hr", p.gru->w_hr);
                reg("gru.w_xr", p.gru->w_xr);
                reg("gru.b_r", p.gru->b_r);
                reg("gru.w_h", p.gru->w_h);
                reg("gru.w_x", p.gru->w_x);
                reg("gru.b", p.gru->b);
                break;
            }
            case LayerKind::ConvGru: {
                p.cgru = ConvGruParams::init(rng, l.d, in[0], l.f);
                reg("convgru.w_hz", p.cgru->w_hz);
                reg("convgru.w_xz", p.cgru->w_xz);
                reg("convgru.b_z", p.cgru->b_z);
                reg("convgru.w_hr", p.cgru->w_hr);
                reg("convgru.w_xr", p.cgru->w_xr);
                reg("convgru.b_r", p.cgru->b_r);
                reg("convgru.w_h", p.cgru->w_h);
                reg("convgru.w_x", p.cgru->w_x);
                reg("convgru.b", p.cgru->b);
                break;
            }
            default:
                break;
        }
    }
}

std::int64_t Model::param_count() const {
    std::int64_t n = 0;
    for (const ParamRef& r : registry_) n += r.tensor->size();
    return n;
}

int Model::decoupled_boundary() const {
    const int r = spec_.recurrent_index();
    if (r < 0) {
        throw ArgumentError("architecture " + spec_.name +
                            " has no recurrent layer; decoupled training does not apply");
    }
    return r;
}

namespace {

struct LayerVars {
    std::optional<Var> w, b;
    std::optional<GruVars> gru;
    std::optional<ConvGruVars> cgru;
};

}  // namespace

Model::Recorded Model::forward_window(const std::vector<Tensor>& frames,
                                      int frozen_prefix) const {
    if (static_cast<int>(frames.size()) != spec_.window) {
        throw DimensionError("forward_window: expected " + std::to_string(spec_.window) +
                             " frames, got " + std::to_string(frames.size()));
    }
    const Shape want = spec_.input_shape();
    for (const Tensor& f : frames) {
        if (f.shape() != want) {
            throw DimensionError("forward_window: frame shape " + f.shape_str() +
                                 " does not match the architecture input " +
                                 shape_to_string(want));
        }
    }
    const int rec_idx = spec_.recurrent_index();
    if (frozen_prefix < 0 || (frozen_prefix > 0 && rec_idx >= 0 && frozen_prefix > rec_idx) ||
        (rec_idx < 0 && frozen_prefix > static_cast<int>(spec_.layers.size()))) {
        throw ArgumentError("forward_window: frozen prefix " + std::to_string(frozen_prefix) +
                            " exceeds the trainable boundary");
    }

    Recorded rec;
    Tape& t = rec.tape;

    // Frozen layers run on a scratch record so the main record never sees
    // their parameters; their per-frame outputs enter as plain leaves.
    Tape scratch;
    std::vector<LayerVars> scratch_vars(static_cast<size_t>(frozen_prefix));
    auto leaf_layer = [this](Tape& tape, size_t i) {
        const LayerSpec& l = spec_.layers[i];
        const LayerParams& p = params_[i];
        LayerVars v;
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::Dense:
                v.w = tape.leaf_ref(p.w);
                v.b = tape.leaf_ref(p.b);
                break;
            case LayerKind::Deconv:
                v.w = tape.leaf_ref(p.w);
                break;
            case LayerKind::Gru:
                v.gru = leaf_params(tape, *p.gru);
                break;
            case LayerKind::ConvGru:
                v.cgru = leaf_params(tape, *p.cgru);
                break;
            default:
                break;
        }
        return v;
    };
    for (int i = 0; i < frozen_prefix; ++i) {
        scratch_vars[static_cast<size_t>(i)] = leaf_layer(scratch, static_cast<size_t>(i));
    }

    std::vector<LayerVars> vars(spec_.layers.size());
    rec.param_vars.assign(registry_.size(), Var{});
    size_t reg_pos = 0;
    for (size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const bool frozen = static_cast<int>(i) < frozen_prefix;
        if (!frozen) vars[i] = leaf_layer(t, i);
        // Registry order matches leaf order within each layer.
        auto mark = [&](Var v) { rec.param_vars[reg_pos++] = v; };
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::Dense:
                mark(frozen ? Var{} : *vars[i].w);
                mark(frozen ? Var{} : *vars[i].b);
                break;
            case LayerKind::Deconv:
                mark(frozen ? Var{} : *vars[i].w);
                break;
            case LayerKind::Gru:
                if (frozen) {
                    for (int k = 0; k < 9; ++k) mark(Var{});
                } else {
                    const GruVars& g = *vars[i].gru;
                    for (Var v : {g.w_hz, g.w_xz, g.b_z, g.w_hr, g.w_xr, g.b_r, g.w_h, g.w_x, g.b})
                        mark(v);
                }
                break;
            case LayerKind::ConvGru:
                if (frozen) {
                    for (int k = 0; k < 9; ++k) mark(Var{});
                } else {
                    const ConvGruVars& g = *vars[i].cgru;
                    for (Var v : {g.w_hz, g.w_xz, g.b_z, g.w_hr, g.w_xr, g.b_r, g.w_h, g.w_x, g.b})
                        mark(v);
                }
                break;
            default:
                break;
        }
    }

    auto apply_static = [&](Tape& tape, const LayerSpec& l, const LayerVars& v, Var x) -> Var {
        switch (l.kind) {
            case LayerKind::Conv:
                return conv2d(tape, x, *v.w, v.b, l.s, l.p);
            case LayerKind::Relu:
                return relu(tape, x);
            case LayerKind::Sigmoid:
                return sigmoid(tape, x);
            case LayerKind::Pool:
                return maxpool2d(tape, x, l.f, l.f);
            case LayerKind::Deconv:
                return transposed_conv2d(tape, x, *v.w, l.s, spec_.input_h, spec_.input_w);
            case LayerKind::Flatten:
                return flatten(tape, x);
            case LayerKind::Dense:
                return dense(tape, x, *v.w, v.b);
            case LayerKind::Reshape:
                return reshape(tape, x, l.target);
            default:
                throw ArgumentError("recurrent layer applied as static");
        }
    };

    auto run_frozen = [&](const Tensor& frame) -> Tensor {
        Var x = scratch.leaf(frame);
        for (int i = 0; i < frozen_prefix; ++i) {
            x = apply_static(scratch, spec_.layers[static_cast<size_t>(i)],
                             scratch_vars[static_cast<size_t>(i)], x);
        }
        return scratch.value(x);
    };

    if (rec_idx < 0) {
        // Baselines have no temporal path: only the last frame matters.
        Var x = frozen_prefix > 0 ? t.leaf(run_frozen(frames.back())) : t.leaf(frames.back());
        for (size_t i = static_cast<size_t>(frozen_prefix); i < spec_.layers.size(); ++i) {
            x = apply_static(t, spec_.layers[i], vars[i], x);
        }
        rec.output = x;
        return rec;
    }

    // Shared pre-recurrent stack applied to every frame.
    std::vector<Var> features;
    for (const Tensor& frame : frames) {
        Var x = frozen_prefix > 0 ? t.leaf(run_frozen(frame)) : t.leaf(frame);
        for (int i = frozen_prefix; i < rec_idx; ++i) {
            x = apply_static(t, spec_.layers[static_cast<size_t>(i)], vars[static_cast<size_t>(i)],
                             x);
        }
        features.push_back(x);
    }

    CellVars cell = spec_.layers[static_cast<size_t>(rec_idx)].kind == LayerKind::Gru
                        ? CellVars{*vars[static_cast<size_t>(rec_idx)].gru}
                        : CellVars{*vars[static_cast<size_t>(rec_idx)].cgru};
    UnrollResult rolled =
        unroll(t, cell, features, zero_state(t, cell, t.value(features.front()).shape()));

    Var x = rolled.last_output;
    for (size_t i = static_cast<size_t>(rec_idx) + 1; i < spec_.layers.size(); ++i) {
        x = apply_static(t, spec_.layers[i], vars[i], x);
    }
    rec.output = x;
    return rec;
}

Tensor Model::predict(const std::vector<Tensor>& frames) const {
    Recorded rec = forward_window(frames);
    return rec.tape.value(rec.output);
}

void copy_shared_prefix_weights(const Model& from, Model& to) {
    std::vector<size_t> a, b;
    for (size_t i = 0; i < from.spec_.layers.size(); ++i) {
        const LayerKind k = from.spec_.layers[i].kind;
        if (k != LayerKind::Gru && k != LayerKind::ConvGru) a.push_back(i);
    }
    for (size_t i = 0; i < to.spec_.layers.size(); ++i) {
        const LayerKind k = to.spec_.layers[i].kind;
        if (k != LayerKind::Gru && k != LayerKind::ConvGru) b.push_back(i);
    }
    if (a.size() != b.size()) {
        throw DimensionError("cannot pair layers of " + from.spec_.name + " with " +
                             to.spec_.name + ": " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + " non-recurrent layers");
    }
    for (size_t i = 0; i < a.size(); ++i) {
        const auto& src = from.params_[a[i]];
        auto& dst = to.params_[b[i]];
        const LayerSpec& sl = from.spec_.layers[a[i]];
        const LayerSpec& dl = to.spec_.layers[b[i]];
        if (sl.kind != dl.kind) {
            throw DimensionError("layer kind mismatch while pairing " + sl.describe() + " with " +
                                 dl.describe());
        }
        auto copy_one = [&](const Tensor& s, Tensor& d, const char* field) {
            if (d.empty() && s.empty()) return;
            if (s.shape() != d.shape()) {
                throw DimensionError("shape disagreement for " + sl.describe() + " " + field +
                                     ": " + s.shape_str() + " vs " + d.shape_str());
            }
            d = s;
        };
        copy_one(src.w, dst.w, "w");
        copy_one(src.b, dst.b, "b");
    }
}

}  // namespace rfcn
