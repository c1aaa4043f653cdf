#pragma once

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "rfcn/autodiff.hpp"
#include "rfcn/rng.hpp"
#include "rfcn/tensor.hpp"

namespace rfcn {

enum class RnnPhi { Tanh, Identity };

/// h_t = theta * phi(h_{t-1}) + theta_x * x_t ; y_t = theta_y * phi(h_t).
struct SimpleRnnParams {
    Tensor theta;    // n x n recurrent weights
    Tensor theta_x;  // n x m input weights
    Tensor theta_y;  // p x n output weights
    RnnPhi phi = RnnPhi::Tanh;

    void validate() const;
    int hidden_size() const { return theta.extent(0); }
};

struct LstmParams {
    Tensor w_xi, w_hi, b_i;
    Tensor w_xf, w_hf, b_f;
    Tensor w_xo, w_ho, b_o;
    Tensor w_xc, w_hc, b_c;
    // The candidate gate activation; sigmoid is the literal reading of the
    // published cell, tanh the conventional one.
    Act candidate_act = Act::Sigmoid;

    void validate() const;
    int hidden_size() const { return w_hi.extent(0); }
    static LstmParams init(Rng& rng, int hidden, int input);
};

struct GruParams {
    Tensor w_hz, w_xz, b_z;
    Tensor w_hr, w_xr, b_r;
    Tensor w_h, w_x, b;

    void validate() const;
    int hidden_size() const { return w_hz.extent(0); }
    static GruParams init(Rng& rng, int hidden, int input);
};

/// Same nine slots as GruParams with every product replaced by a same-padded
/// convolution. Input-side kernels are f x c x k x k, hidden-side f x f x k x k,
/// biases one scalar per output channel. Kernels must be odd-sized.
struct ConvGruParams {
    Tensor w_hz, w_xz, b_z;
    Tensor w_hr, w_xr, b_r;
    Tensor w_h, w_x, b;

    void validate() const;
    int hidden_channels() const { return w_hz.extent(0); }
    int kernel() const { return w_hz.extent(2); }
    static ConvGruParams init(Rng& rng, int hidden_channels, int input_channels, int kernel);
};

// Tape-resident views of the parameters (leafed once per window).
struct SimpleRnnVars {
    Var theta, theta_x, theta_y;
    RnnPhi phi;
};
struct LstmVars {
    Var w_xi, w_hi, b_i, w_xf, w_hf, b_f, w_xo, w_ho, b_o, w_xc, w_hc, b_c;
    Act candidate_act;
};
struct GruVars {
    Var w_hz, w_xz, b_z, w_hr, w_xr, b_r, w_h, w_x, b;
};
struct ConvGruVars {
    Var w_hz, w_xz, b_z, w_hr, w_xr, b_r, w_h, w_x, b;
};

// The parameter structs are borrowed (leaf_ref), so they must outlive the
// tape's forward and backward passes; mutate them only between windows.
SimpleRnnVars leaf_params(Tape& t, const SimpleRnnParams& p);
LstmVars leaf_params(Tape& t, const LstmParams& p);
GruVars leaf_params(Tape& t, const GruParams& p);
ConvGruVars leaf_params(Tape& t, const ConvGruParams& p);

/// Hidden (and for LSTM, cell) state threaded across steps.
struct CellState {
    Var h;
    std::optional<Var> c;
};

std::pair<Var, Var> simple_rnn_step(Tape& t, const SimpleRnnVars& p, Var x, Var h_prev);
CellState lstm_step(Tape& t, const LstmVars& p, Var x, CellState prev);
Var gru_step(Tape& t, const GruVars& p, Var x, Var h_prev);
Var conv_gru_step(Tape& t, const ConvGruVars& p, Var x, Var h_prev);

using CellVars = std::variant<SimpleRnnVars, LstmVars, GruVars, ConvGruVars>;

struct UnrollResult {
    std::vector<CellState> states;
    Var last_output;
};

/// Threads one shared parameter set through L >= 1 steps from the given
/// initial state; the whole unroll lands on the tape for BPTT.
UnrollResult unroll(Tape& t, const CellVars& cell, const std::vector<Var>& inputs, CellState h0);

/// Zero initial state matching the cell kind and per-step input shape.
CellState zero_state(Tape& t, const CellVars& cell, const Shape& input_shape);

/// Spectral norms of d h_T / d h_k for k = 1..T-1 (oldest first), computed by
/// explicit Jacobian chaining of theta^T diag(phi'(h_{i-1})) along the
/// zero-input trajectory started at h0.
std::vector<double> gradient_flow_norms(const SimpleRnnParams& p, int T, const Tensor& h0);

/// Spectral norm of d h_T / d h_1 for a GRU driven by zero inputs, obtained
/// from reverse-mode Jacobian rows. Used to contrast gated flow with the
/// plain recurrence above.
double gru_flow_norm(const GruParams& p, int T, const Tensor& h0);

/// Largest singular value by power iteration on M^T M (deterministic start).
double spectral_norm(const Tensor& m);

}  // namespace rfcn
