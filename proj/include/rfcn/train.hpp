#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rfcn/data.hpp"
#include "rfcn/metrics.hpp"
#include "rfcn/model.hpp"

namespace rfcn {

/// loss = -mean(y ln p + (1-y) ln(1-p)) with p clamped to [eps, 1-eps].
/// Returns the loss and its gradient with respect to pred.
std::pair<double, Tensor> logistic_loss(const Tensor& pred, const Tensor& target,
                                        double eps = 1e-7);

/// Per-parameter accumulators E[g^2] and E[dx^2].
struct AdadeltaState {
    std::vector<Tensor> eg2, edx2;
    double rho = 0.95;
    double eps = 1e-6;

    void init_like(const std::vector<Model::ParamRef>& params);
    bool empty() const { return eg2.empty(); }
};

/// E[g^2] <- rho E[g^2] + (1-rho) g^2
/// dx = -sqrt(E[dx^2]+eps)/sqrt(E[g^2]+eps) * g
/// E[dx^2] <- rho E[dx^2] + (1-rho) dx^2 ; x <- x + dx
void adadelta_update(Tensor& param, const Tensor& grad, Tensor& eg2, Tensor& edx2, double rho,
                     double eps);

enum class TrainMode { EndToEnd, Decoupled };

struct TrainConfig {
    int max_epochs = 500;
    int window = 3;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::EndToEnd;
    int freeze_prefix = 0;   // explicit prefix freeze (layers [0, N) untouched)
    double loss_clamp = 1e-7;
    double rho = 0.95;
    double eps = 1e-6;
    int eval_every = 1;      // held-out metrics cadence (always at the last epoch)
    double threshold = 0.5;  // binarization for validation metrics
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    std::optional<MetricsReport> val;
};

using TrainCallback = std::function<void(const EpochStats&)>;

/// Online training: one Adadelta step per sliding window, windows reshuffled
/// each epoch by a per-epoch seeded generator. Deterministic under a fixed
/// seed. Validation metrics are micro-aggregated over the test split.
std::vector<EpochStats> train(Model& model, const DatasetSplit& data, const TrainConfig& cfg,
                              const TrainCallback& cb = {}, AdadeltaState* state_out = nullptr);

/// Decoupled integration: the trained baseline supplies the shared layer
/// chain, which stays frozen; only the recurrent layer and everything after
/// it receive updates.
std::vector<EpochStats> train_decoupled(Model& fc_model, Model& rfc_model,
                                        const DatasetSplit& data, const TrainConfig& cfg,
                                        const TrainCallback& cb = {},
                                        AdadeltaState* state_out = nullptr);

using PredictionSink = std::function<void(const Window&, const Tensor& probability_map)>;

/// Micro-aggregated metrics over every sliding window of the sequences.
MetricsReport evaluate(Model& model, const std::vector<FrameSequence>& sequences,
                       double threshold = 0.5, const PredictionSink& sink = {});

// ---------------------------------------------------------------------------
// Checkpoints: magic "RFCN", version u32, descriptor length+bytes, tensor
// count u32, then per tensor: name length+bytes, rank u32, extents u32[],
// raw little-endian f64 scalars. The descriptor names the preset and its
// build parameters, e.g. "rfc-lenet;scale=1;window=3;input=1x28x28".
// ---------------------------------------------------------------------------

std::string make_descriptor(const std::string& preset, double scale, int window, int input_c,
                            int input_h, int input_w);
/// Rebuilds the architecture named by a descriptor. Descriptors beginning
/// with "custom" require the caller to supply the architecture instead.
ArchitectureSpec spec_from_descriptor(const std::string& descriptor);

void save_checkpoint(const std::filesystem::path& path, Model& model, const AdadeltaState* state,
                     const std::string& descriptor);

struct Checkpoint {
    std::string descriptor;
    std::vector<std::pair<std::string, Tensor>> tensors;
};
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Restores a model (and optionally optimizer state) from a checkpoint.
/// When the descriptor names a preset the architecture is rebuilt from it;
/// custom descriptors use `custom_spec`. Every registry tensor must be
/// present with the exact shape.
Model load_checkpoint_model(const std::filesystem::path& path,
                            std::optional<ArchitectureSpec> custom_spec = std::nullopt,
                            AdadeltaState* state_out = nullptr,
                            std::string* descriptor_out = nullptr);

}  // namespace rfcn
