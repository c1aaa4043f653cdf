#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rfcn/autodiff.hpp"
#include "rfcn/cells.hpp"
#include "rfcn/tensor.hpp"

namespace rfcn {

enum class LayerKind { Conv, Relu, Pool, Deconv, Flatten, Dense, Gru, ConvGru, Sigmoid, Reshape };

/// One row of an architecture. `f` doubles as the pool window for Pool
/// layers; `p` is total zero padding per spatial dimension.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int f = 0;
    int s = 1;
    int p = 0;
    int d = 0;    // output channels
    int out = 0;  // dense width; gru hidden size (0 = flattened input size)
    Shape target;  // reshape target
    bool inside_recurrent_node = false;
    std::string note;  // published notation, when the effective values deviate

    std::string describe() const;
};

struct ArchitectureSpec {
    std::string name = "custom";
    int input_c = 1, input_h = 0, input_w = 0;
    int window = 3;
    std::vector<LayerSpec> layers;

    int recurrent_index() const;
    bool recurrent() const { return recurrent_index() >= 0; }
    Shape input_shape() const { return {input_c, input_h, input_w}; }
    void validate() const;
};

struct ShapeRow {
    std::string layer;
    Shape in, out;
    std::int64_t param_count = 0;
    std::string note;
};

struct ShapeTable {
    std::vector<ShapeRow> rows;
    Shape input, output;
    std::int64_t total_params = 0;
    std::string render() const;
};

/// Walks every layer, failing with the first inconsistent one (both shapes in
/// the message). Deconv layers restore the architecture's input spatial size
/// and record their crop.
ShapeTable infer_shapes(const ArchitectureSpec& spec);

const std::vector<std::string>& preset_names();

/// The published networks (rfc-*) and their baselines-by-deletion (fc-*).
/// `scale` in (0,1] shrinks input size, channel widths, strides and pool
/// sizes proportionally; scale=1 is the published geometry. `input_hw`
/// overrides the nominal input size (the fully convolutional presets accept
/// any size large enough for their pooling chain).
ArchitectureSpec build_preset(const std::string& name, double scale,
                              std::optional<std::pair<int, int>> input_hw = std::nullopt,
                              int window = 3);

/// Plain-text architecture format: one layer per line in Table notation,
/// plus `input`, `window` and `@recurrent-node-begin/end` directives.
ArchitectureSpec parse_architecture(const std::string& text, const std::string& origin = "<text>");
ArchitectureSpec load_architecture_file(const std::filesystem::path& path);
std::string to_config_text(const ArchitectureSpec& spec);

/// Instantiated network: parameter tensors per layer plus a registry
/// enumerating every learnable tensor exactly once, in a stable order.
class Model {
public:
    Model(ArchitectureSpec spec, std::uint64_t seed);

    // The registry points into this model's parameter storage.
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ArchitectureSpec& spec() const { return spec_; }
    const ShapeTable& shapes() const { return shapes_; }

    struct ParamRef {
        std::string name;
        Tensor* tensor;
    };
    const std::vector<ParamRef>& registry() { return registry_; }
    std::int64_t param_count() const;

    struct Recorded {
        Tape tape;
        Var output;
        // Aligned with registry(); frozen entries carry an invalid Var.
        std::vector<Var> param_vars;
    };

    /// Runs a window of L frames: shared per-frame stack, recurrent unroll
    /// from a zero state, post-recurrent layers on the final hidden state.
    /// Layers with index < frozen_prefix are evaluated outside the record.
    Recorded forward_window(const std::vector<Tensor>& frames, int frozen_prefix = 0) const;

    /// Values-only convenience wrapper.
    Tensor predict(const std::vector<Tensor>& frames) const;

    /// Index of the first layer that is trained in decoupled mode.
    int decoupled_boundary() const;

private:
    struct LayerParams {
        Tensor w, b;
        std::optional<GruParams> gru;
        std::optional<ConvGruParams> cgru;
    };

    ArchitectureSpec spec_;
    ShapeTable shapes_;
    std::vector<LayerParams> params_;
    std::vector<ParamRef> registry_;

    friend void copy_shared_prefix_weights(const Model& from, Model& to);
};

/// Copies the weights of the non-recurrent layer chain shared between an
/// fc-* baseline and its rfc-* counterpart (layers are paired in order,
/// skipping the recurrent layer). Shape disagreements raise DimensionError.
void copy_shared_prefix_weights(const Model& from, Model& to);

}  // namespace rfcn
