#include "doctest.h"

#include <cmath>
#include <set>

#include "rfcn/error.hpp"
#include "rfcn/gradcheck.hpp"
#include "rfcn/model.hpp"
#include "rfcn/rng.hpp"
#include "rfcn/train.hpp"

using namespace rfcn;

namespace {

std::vector<Tensor> random_window(Rng& rng, const ArchitectureSpec& spec) {
    std::vector<Tensor> frames;
    for (int i = 0; i < spec.window; ++i) {
        frames.push_back(rng.uniform_tensor(spec.input_shape(), 0.0, 1.0));
    }
    return frames;
}

}  // namespace

TEST_CASE("published preset shape chains are dense predictions") {
    for (const std::string& name : preset_names()) {
        ArchitectureSpec spec = build_preset(name, 1.0);
        ShapeTable table = infer_shapes(spec);
        CHECK(table.output == Shape{1, spec.input_h, spec.input_w});
    }
    // Published input sizes.
    CHECK(build_preset("rfc-lenet", 1.0).input_h == 28);
    CHECK(build_preset("rfc-12s", 1.0).input_h == 120);
    CHECK(build_preset("rfc-12s", 1.0).input_w == 180);
    CHECK(build_preset("rfc-vgg", 1.0).input_h == 240);
    CHECK(build_preset("rfc-vgg", 1.0).input_w == 360);
}

TEST_CASE("rfc-lenet reproduces the published GRU width 784x784") {
    ArchitectureSpec spec = build_preset("rfc-lenet", 1.0);
    ShapeTable table = infer_shapes(spec);
    const int r = spec.recurrent_index();
    REQUIRE(r >= 0);
    CHECK(spec.layers[static_cast<size_t>(r)].kind == LayerKind::Gru);
    CHECK(table.rows[static_cast<size_t>(r)].in == Shape{784});
    CHECK(table.rows[static_cast<size_t>(r)].out == Shape{784});
    // DeConv sits inside the recurrent node, before Flatten+GRU.
    bool deconv_before_gru = false;
    for (int i = 0; i < r; ++i) {
        if (spec.layers[static_cast<size_t>(i)].kind == LayerKind::Deconv) {
            deconv_before_gru = true;
        }
    }
    CHECK(deconv_before_gru);
    CHECK(spec.layers[static_cast<size_t>(r)].inside_recurrent_node);
}

TEST_CASE("rfc-12s projects the coarse map to the published GRU width 100") {
    ArchitectureSpec spec = build_preset("rfc-12s", 1.0);
    ShapeTable table = infer_shapes(spec);
    const int r = spec.recurrent_index();
    REQUIRE(r >= 0);
    CHECK(table.rows[static_cast<size_t>(r)].in == Shape{100});
    CHECK(table.rows[static_cast<size_t>(r)].out == Shape{100});
    // Deconv comes as the last step, outside the recurrent node.
    int deconv_idx = -1;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::Deconv) deconv_idx = static_cast<int>(i);
    }
    REQUIRE(deconv_idx > r);
    CHECK_FALSE(spec.layers[static_cast<size_t>(deconv_idx)].inside_recurrent_node);
    // Upsampling stride equals the chain's total downsampling factor.
    CHECK(spec.layers[static_cast<size_t>(deconv_idx)].s == 12);
}

TEST_CASE("rfc-vgg uses a Conv-GRU on feature maps") {
    ArchitectureSpec spec = build_preset("rfc-vgg", 1.0);
    ShapeTable table = infer_shapes(spec);
    const int r = spec.recurrent_index();
    REQUIRE(r >= 0);
    CHECK(spec.layers[static_cast<size_t>(r)].kind == LayerKind::ConvGru);
    CHECK(spec.layers[static_cast<size_t>(r)].d == 128);
    CHECK(table.rows[static_cast<size_t>(r)].in == Shape{128, 6, 10});
    CHECK(table.rows[static_cast<size_t>(r)].out == Shape{128, 6, 10});
}

TEST_CASE("fc baselines are the identical chain minus the recurrent layer") {
    for (const char* pair : {"lenet", "12s", "vgg"}) {
        ArchitectureSpec rfc = build_preset(std::string("rfc-") + pair, 0.25);
        ArchitectureSpec fc = build_preset(std::string("fc-") + pair, 0.25);
        CHECK(fc.layers.size() == rfc.layers.size() - 1);
        CHECK_FALSE(fc.recurrent());
        size_t j = 0;
        for (size_t i = 0; i < rfc.layers.size(); ++i) {
            if (static_cast<int>(i) == rfc.recurrent_index()) continue;
            CHECK(rfc.layers[i].describe() == fc.layers[j].describe());
            ++j;
        }
        CHECK(infer_shapes(fc).output == infer_shapes(rfc).output);
    }
}

TEST_CASE("dense-prediction invariant holds across scales") {
    for (const std::string& name : preset_names()) {
        for (double s : {1.0, 0.5, 0.25}) {
            ArchitectureSpec spec = build_preset(name, s);
            CHECK(infer_shapes(spec).output == Shape{1, spec.input_h, spec.input_w});
        }
    }
    CHECK_THROWS_AS(build_preset("rfc-lenet", 0.0), ArgumentError);
    CHECK_THROWS_AS(build_preset("nonesuch", 1.0), ArgumentError);
}

TEST_CASE("input size override keeps dense prediction") {
    ArchitectureSpec spec = build_preset("rfc-vgg", 0.25, std::pair<int, int>{64, 64});
    CHECK(spec.input_h == 64);
    CHECK(infer_shapes(spec).output == Shape{1, 64, 64});
}

TEST_CASE("shape inference reports the failing layer") {
    ArchitectureSpec spec;
    spec.name = "broken";
    spec.input_c = 1;
    spec.input_h = spec.input_w = 6;
    LayerSpec pool;
    pool.kind = LayerKind::Pool;
    pool.f = 4;
    spec.layers.push_back(pool);
    spec.layers.push_back(pool);  // 6 -> 1 -> window exceeds extent
    try {
        infer_shapes(spec);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("layer 1") != std::string::npos);
        CHECK(msg.find("(1x1x1)") != std::string::npos);
    }

    // Empty layer list: identity shape table.
    ArchitectureSpec empty;
    empty.input_c = 1;
    empty.input_h = empty.input_w = 5;
    ShapeTable t = infer_shapes(empty);
    CHECK(t.rows.empty());
    CHECK(t.output == Shape{1, 5, 5});
}

TEST_CASE("committed padding convention worked examples") {
    // The per-operation arithmetic the presets are derived from.
    ArchitectureSpec spec;
    spec.input_c = 1;
    spec.input_h = 120;
    spec.input_w = 180;
    LayerSpec conv;
    conv.kind = LayerKind::Conv;
    conv.f = 5;
    conv.s = 3;
    conv.p = 10;
    conv.d = 20;
    spec.layers.push_back(conv);
    ShapeTable t = infer_shapes(spec);
    CHECK(t.rows[0].out == Shape{20, 42, 62});
}

TEST_CASE("architecture config text round trip") {
    ArchitectureSpec spec = build_preset("rfc-12s", 0.25);
    const std::string text = to_config_text(spec);
    ArchitectureSpec back = parse_architecture(text);
    REQUIRE(back.layers.size() == spec.layers.size());
    CHECK(back.input_h == spec.input_h);
    CHECK(back.window == spec.window);
    CHECK(back.recurrent_index() == spec.recurrent_index());
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        CHECK(back.layers[i].describe() == spec.layers[i].describe());
        CHECK(back.layers[i].inside_recurrent_node == spec.layers[i].inside_recurrent_node);
    }
    CHECK(infer_shapes(back).output == infer_shapes(spec).output);
}

TEST_CASE("architecture parser diagnostics carry line numbers") {
    const char* bad_key = "input 8x8\nconv F=3 D=2 Q=9\n";
    try {
        parse_architecture(bad_key, "arch.cfg");
        FAIL("expected ArgumentError");
    } catch (const ArgumentError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("arch.cfg:2") != std::string::npos);
        CHECK(msg.find("'q'") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_architecture("input 8x8\nwat\n"), ArgumentError);
    CHECK_THROWS_AS(parse_architecture("conv f=3 d=1\n"), ArgumentError);  // input missing
    // Case-insensitive parse.
    ArchitectureSpec ok = parse_architecture("INPUT 8x8\nCONV F=3 S=1 P=2 D=2\nRELU\nSIGMOID\n");
    CHECK(ok.layers.size() == 3);
    // Two recurrent layers rejected.
    CHECK_THROWS_AS(
        parse_architecture("input 8x8\n@recurrent-node-begin\nflatten\ngru\ngru\n"
                           "@recurrent-node-end\nsigmoid\n"),
        ArgumentError);
}

TEST_CASE("model registry enumerates every learnable tensor once") {
    ArchitectureSpec spec = build_preset("rfc-lenet", 0.25);
    Model model(spec, 7);
    ShapeTable table = infer_shapes(spec);
    CHECK(model.param_count() == table.total_params);
    std::set<std::string> names;
    std::set<const Tensor*> ptrs;
    for (const auto& p : model.registry()) {
        CHECK(names.insert(p.name).second);
        CHECK(ptrs.insert(p.tensor).second);
    }
}

TEST_CASE("forward window validates frame count and size") {
    ArchitectureSpec spec = build_preset("rfc-lenet", 0.25);
    Model model(spec, 1);
    Rng rng(2);
    auto frames = random_window(rng, spec);
    CHECK_THROWS_AS(model.forward_window({frames[0]}), DimensionError);
    auto bad = frames;
    bad[1] = Tensor({1, 9, 9});
    CHECK_THROWS_AS(model.forward_window(bad), DimensionError);
}

TEST_CASE("forward window emits a probability map of the input size") {
    Rng rng(3);
    for (const std::string& name : {std::string("rfc-lenet"), std::string("rfc-12s")}) {
        ArchitectureSpec spec = build_preset(name, 0.25);
        Model model(spec, 11);
        Tensor out = model.predict(random_window(rng, spec));
        CHECK(out.shape() == Shape{1, spec.input_h, spec.input_w});
        for (std::int64_t i = 0; i < out.size(); ++i) {
            CHECK(out[i] > 0.0);
            CHECK(out[i] < 1.0);
        }
    }
}

TEST_CASE("rfc-vgg at scale 0.25 emits 1x60x90 probabilities") {
    ArchitectureSpec spec = build_preset("rfc-vgg", 0.25);
    REQUIRE(spec.input_h == 60);
    REQUIRE(spec.input_w == 90);
    Model model(spec, 5);
    Rng rng(6);
    Tensor out = model.predict(random_window(rng, spec));
    CHECK(out.shape() == Shape{1, 60, 90});
    for (std::int64_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] > 0.0);
        CHECK(out[i] < 1.0);
    }
}

TEST_CASE("baselines ignore all but the last frame") {
    ArchitectureSpec spec = build_preset("fc-lenet", 0.25);
    Model model(spec, 9);
    Rng rng(10);
    auto w1 = random_window(rng, spec);
    auto w2 = random_window(rng, spec);
    w2.back() = w1.back();
    CHECK(model.predict(w1) == model.predict(w2));
}

TEST_CASE("recurrent models depend on earlier frames") {
    ArchitectureSpec spec = build_preset("rfc-lenet", 0.25);
    Model model(spec, 9);
    Rng rng(11);
    auto w1 = random_window(rng, spec);
    auto w2 = random_window(rng, spec);
    w2.back() = w1.back();
    CHECK(model.predict(w1) != model.predict(w2));
}

TEST_CASE("pre-recurrent weights are shared across all frames of the window") {
    ArchitectureSpec spec = build_preset("rfc-lenet", 0.25);
    Model model(spec, 13);
    Rng rng(14);
    auto frames = random_window(rng, spec);
    Model::Recorded rec = model.forward_window(frames);
    Var loss = logistic_loss_op(rec.tape, rec.output,
                                Tensor::ones(rec.tape.value(rec.output).shape()), 1e-7);
    rec.tape.backward(loss, Tensor({1}, {1.0}));
    // First conv kernel gradient is nonzero: the last-frame loss reaches the
    // shared stack through every unrolled step.
    const Tensor& g = rec.tape.grad(rec.param_vars[0]);
    double norm = 0.0;
    for (std::int64_t i = 0; i < g.size(); ++i) norm += g[i] * g[i];
    CHECK(norm > 0.0);
}

TEST_CASE("full-model gradients match finite differences at reduced scale") {
    ArchitectureSpec spec = build_preset("rfc-lenet", 0.25);
    Model model(spec, 21);
    Rng rng(22);
    auto frames = random_window(rng, spec);
    Tensor target({1, spec.input_h, spec.input_w});
    for (std::int64_t i = 0; i < target.size(); ++i) target[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;

    Model::Recorded rec = model.forward_window(frames);
    Var loss = logistic_loss_op(rec.tape, rec.output, target, 1e-7);
    rec.tape.backward(loss, Tensor({1}, {1.0}));

    auto loss_of = [&]() {
        Model::Recorded r2 = model.forward_window(frames);
        return logistic_loss(r2.tape.value(r2.output), target).first;
    };

    GradCompare cmp;  // 1e-4 relative, 1e-6 absolute floor
    Rng pick(23);
    auto& registry = model.registry();
    for (size_t pi = 0; pi < registry.size(); ++pi) {
        Tensor& param = *registry[pi].tensor;
        const Tensor& analytic = rec.tape.grad(rec.param_vars[pi]);
        const int samples = static_cast<int>(std::min<std::int64_t>(6, param.size()));
        for (int s = 0; s < samples; ++s) {
            const std::int64_t ci = pick.uniform_int(0, static_cast<int>(param.size() - 1));
            const double saved = param[ci];
            const double eps = 1e-5;
            param[ci] = saved + eps;
            const double fp = loss_of();
            param[ci] = saved - eps;
            const double fm = loss_of();
            param[ci] = saved;
            const double fd = (fp - fm) / (2 * eps);
            INFO(registry[pi].name, " coord ", ci, " analytic ", analytic[ci], " fd ", fd);
            CHECK(cmp.ok(analytic[ci], fd));
        }
    }
}

TEST_CASE("frozen prefix evaluates outside the record with zero gradients") {
    ArchitectureSpec spec = build_preset("rfc-lenet", 0.25);
    Model model(spec, 31);
    Rng rng(32);
    auto frames = random_window(rng, spec);
    const int boundary = model.decoupled_boundary();
    Model::Recorded rec = model.forward_window(frames, boundary);
    Var loss = logistic_loss_op(rec.tape, rec.output,
                                Tensor::ones(rec.tape.value(rec.output).shape()), 1e-7);
    rec.tape.backward(loss, Tensor({1}, {1.0}));
    auto& registry = model.registry();
    int frozen_params = 0;
    for (size_t i = 0; i < registry.size(); ++i) {
        if (!rec.param_vars[i].valid()) ++frozen_params;
    }
    CHECK(frozen_params > 0);
    // Frozen and unfrozen outputs agree.
    Model::Recorded free_rec = model.forward_window(frames, 0);
    const Tensor& a = rec.tape.value(rec.output);
    const Tensor& b = free_rec.tape.value(free_rec.output);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("shared prefix weight transfer pairs fc with rfc layers") {
    ArchitectureSpec fc_spec = build_preset("fc-lenet", 0.25);
    ArchitectureSpec rfc_spec = build_preset("rfc-lenet", 0.25);
    Model fc(fc_spec, 41);
    Model rfc(rfc_spec, 42);
    copy_shared_prefix_weights(fc, rfc);
    // First conv weights now agree.
    CHECK(*rfc.registry()[0].tensor == *fc.registry()[0].tensor);

    Model other(build_preset("fc-12s", 0.25), 43);
    CHECK_THROWS_AS(copy_shared_prefix_weights(other, rfc), DimensionError);
}
