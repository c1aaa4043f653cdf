#include "rfcn/cells.hpp"

#include <cmath>
#include <string>

#include "rfcn/error.hpp"
#include "rfcn/init.hpp"

namespace rfcn {

namespace {

void require_square(const Tensor& m, const char* name) {
    if (m.rank() != 2 || m.extent(0) != m.extent(1)) {
        throw DimensionError(std::string(name) + " must be square, got " + m.shape_str());
    }
}

void require_dims(const Tensor& m, int rows, int cols, const char* name) {
    if (m.rank() != 2 || m.extent(0) != rows || m.extent(1) != cols) {
        throw DimensionError(std::string(name) + " must be " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", got " + m.shape_str());
    }
}

void require_vec(const Tensor& v, int n, const char* name) {
    if (v.rank() != 1 || v.extent(0) != n) {
        throw DimensionError(std::string(name) + " must have length " + std::to_string(n) +
                             ", got " + v.shape_str());
    }
}

Tensor gate_bias(int n) { return Tensor({n}); }

Tensor fan_init(Rng& rng, int rows, int cols) {
    return glorot_uniform(rng, {rows, cols}, cols, rows);
}

Tensor conv_fan_init(Rng& rng, int f, int c, int k) {
    return glorot_uniform(rng, {f, c, k, k}, c * k * k, f * k * k);
}

}  // namespace

void SimpleRnnParams::validate() const {
    require_square(theta, "simple RNN theta");
    const int n = theta.extent(0);
    if (theta_x.rank() != 2 || theta_x.extent(0) != n) {
        throw DimensionError("simple RNN theta_x must be " + std::to_string(n) + "xM, got " +
                             theta_x.shape_str());
    }
    if (theta_y.rank() != 2 || theta_y.extent(1) != n) {
        throw DimensionError("simple RNN theta_y must be Px" + std::to_string(n) + ", got " +
                             theta_y.shape_str());
    }
}

void LstmParams::validate() const {
    require_square(w_hi, "LSTM W_hi");
    const int n = w_hi.extent(0);
    const int m = w_xi.rank() == 2 ? w_xi.extent(1) : -1;
    for (auto [t, name] : {std::pair<const Tensor*, const char*>{&w_hf, "LSTM W_hf"},
                           {&w_ho, "LSTM W_ho"},
                           {&w_hc, "LSTM W_hc"}}) {
        require_dims(*t, n, n, name);
    }
    for (auto [t, name] : {std::pair<const Tensor*, const char*>{&w_xi, "LSTM W_xi"},
                           {&w_xf, "LSTM W_xf"},
                           {&w_xo, "LSTM W_xo"},
                           {&w_xc, "LSTM W_xc"}}) {
        require_dims(*t, n, m, name);
    }
    for (auto [t, name] : {std::pair<const Tensor*, const char*>{&b_i, "LSTM b_i"},
                           {&b_f, "LSTM b_f"},
                           {&b_o, "LSTM b_o"},
                           {&b_c, "LSTM b_c"}}) {
        require_vec(*t, n, name);
    }
}

LstmParams LstmParams::init(Rng& rng, int hidden, int input) {
    LstmParams p;
    p.w_hi = orthogonal_matrix(rng, hidden);
    p.w_hf = orthogonal_matrix(rng, hidden);
    p.w_ho = orthogonal_matrix(rng, hidden);
    p.w_hc = orthogonal_matrix(rng, hidden);
    p.w_xi = fan_init(rng, hidden, input);
    p.w_xf = fan_init(rng, hidden, input);
    p.w_xo = fan_init(rng, hidden, input);
    p.w_xc = fan_init(rng, hidden, input);
    p.b_i = gate_bias(hidden);
    p.b_f = gate_bias(hidden);
    p.b_o = gate_bias(hidden);
    p.b_c = gate_bias(hidden);
    p.validate();
    return p;
}

void GruParams::validate() const {
    require_square(w_hz, "GRU W_hz");
    const int n = w_hz.extent(0);
    const int m = w_xz.rank() == 2 ? w_xz.extent(1) : -1;
    require_dims(w_hr, n, n, "GRU W_hr");
    require_dims(w_h, n, n, "GRU W_h");
    require_dims(w_xz, n, m, "GRU W_xz");
    require_dims(w_xr, n, m, "GRU W_xr");
    require_dims(w_x, n, m, "GRU W_x");
    require_vec(b_z, n, "GRU b_z");
    require_vec(b_r, n, "GRU b_r");
    require_vec(b, n, "GRU b");
}

GruParams GruParams::init(Rng& rng, int hidden, int input) {
    GruParams p;
    p.w_hz = orthogonal_matrix(rng, hidden);
    p.w_hr = orthogonal_matrix(rng, hidden);
    p.w_h = orthogonal_matrix(rng, hidden);
    p.w_xz = fan_init(rng, hidden, input);
    p.w_xr = fan_init(rng, hidden, input);
    p.w_x = fan_init(rng, hidden, input);
    p.b_z = gate_bias(hidden);
    p.b_r = gate_bias(hidden);
    p.b = gate_bias(hidden);
    p.validate();
    return p;
}

void ConvGruParams::validate() const {
    if (w_hz.rank() != 4 || w_hz.extent(0) != w_hz.extent(1)) {
        throw DimensionError("Conv-GRU hidden kernels must be FxFxKxK, got " + w_hz.shape_str());
    }
    const int f = w_hz.extent(0);
    const int k = w_hz.extent(2);
    if (k % 2 == 0 || w_hz.extent(3) != k) {
        throw DimensionError("Conv-GRU kernels must be odd and square, got " + w_hz.shape_str());
    }
    const int c = w_xz.rank() == 4 ? w_xz.extent(1) : -1;
    auto check4 = [&](const Tensor& t, int e0, int e1, const char* name) {
        if (t.rank() != 4 || t.extent(0) != e0 || t.extent(1) != e1 || t.extent(2) != k ||
            t.extent(3) != k) {
            throw DimensionError(std::string(name) + " must be " + std::to_string(e0) + "x" +
                                 std::to_string(e1) + "x" + std::to_string(k) + "x" +
                                 std::to_string(k) + ", got " + t.shape_str());
        }
    };
    check4(w_hr, f, f, "Conv-GRU W_hr");
    check4(w_h, f, f, "Conv-GRU W_h");
    check4(w_xz, f, c, "Conv-GRU W_xz");
    check4(w_xr, f, c, "Conv-GRU W_xr");
    check4(w_x, f, c, "Conv-GRU W_x");
    require_vec(b_z, f, "Conv-GRU b_z");
    require_vec(b_r, f, "Conv-GRU b_r");
    require_vec(b, f, "Conv-GRU b");
}

ConvGruParams ConvGruParams::init(Rng& rng, int hidden_channels, int input_channels, int kernel) {
    if (kernel % 2 == 0) throw ArgumentError("Conv-GRU kernel must be odd");
    ConvGruParams p;
    p.w_hz = conv_fan_init(rng, hidden_channels, hidden_channels, kernel);
    p.w_hr = conv_fan_init(rng, hidden_channels, hidden_channels, kernel);
    p.w_h = conv_fan_init(rng, hidden_channels, hidden_channels, kernel);
    p.w_xz = conv_fan_init(rng, hidden_channels, input_channels, kernel);
    p.w_xr = conv_fan_init(rng, hidden_channels, input_channels, kernel);
    p.w_x = conv_fan_init(rng, hidden_channels, input_channels, kernel);
    p.b_z = gate_bias(hidden_channels);
    p.b_r = gate_bias(hidden_channels);
    p.b = gate_bias(hidden_channels);
    p.validate();
    return p;
}

SimpleRnnVars leaf_params(Tape& t, const SimpleRnnParams& p) {
    p.validate();
    return {t.leaf_ref(p.theta), t.leaf_ref(p.theta_x), t.leaf_ref(p.theta_y), p.phi};
}

LstmVars leaf_params(Tape& t, const LstmParams& p) {
    p.validate();
    return {t.leaf_ref(p.w_xi), t.leaf_ref(p.w_hi), t.leaf_ref(p.b_i),  t.leaf_ref(p.w_xf),
            t.leaf_ref(p.w_hf), t.leaf_ref(p.b_f),  t.leaf_ref(p.w_xo), t.leaf_ref(p.w_ho),
            t.leaf_ref(p.b_o),  t.leaf_ref(p.w_xc), t.leaf_ref(p.w_hc), t.leaf_ref(p.b_c),
            p.candidate_act};
}

GruVars leaf_params(Tape& t, const GruParams& p) {
    p.validate();
    return {t.leaf_ref(p.w_hz), t.leaf_ref(p.w_xz), t.leaf_ref(p.b_z),
            t.leaf_ref(p.w_hr), t.leaf_ref(p.w_xr), t.leaf_ref(p.b_r),
            t.leaf_ref(p.w_h),  t.leaf_ref(p.w_x),  t.leaf_ref(p.b)};
}

ConvGruVars leaf_params(Tape& t, const ConvGruParams& p) {
    p.validate();
    return {t.leaf_ref(p.w_hz), t.leaf_ref(p.w_xz), t.leaf_ref(p.b_z),
            t.leaf_ref(p.w_hr), t.leaf_ref(p.w_xr), t.leaf_ref(p.b_r),
            t.leaf_ref(p.w_h),  t.leaf_ref(p.w_x),  t.leaf_ref(p.b)};
}

namespace {

Var apply_phi(Tape& t, Var x, RnnPhi phi) {
    return phi == RnnPhi::Tanh ? tanh_op(t, x) : x;
}

}  // namespace

std::pair<Var, Var> simple_rnn_step(Tape& t, const SimpleRnnVars& p, Var x, Var h_prev) {
    Var h = add(t, dense(t, apply_phi(t, h_prev, p.phi), p.theta, std::nullopt),
                dense(t, x, p.theta_x, std::nullopt));
    Var y = dense(t, apply_phi(t, h, p.phi), p.theta_y, std::nullopt);
    return {h, y};
}

CellState lstm_step(Tape& t, const LstmVars& p, Var x, CellState prev) {
    if (!prev.c) throw ArgumentError("lstm_step: state is missing the cell tensor");
    auto gate = [&](Var wx, Var wh, Var b, Act a) {
        return activation(t, add(t, dense(t, x, wx, std::nullopt), dense(t, prev.h, wh, {b})), a);
    };
    Var i = gate(p.w_xi, p.w_hi, p.b_i, Act::Sigmoid);
    Var f = gate(p.w_xf, p.w_hf, p.b_f, Act::Sigmoid);
    Var o = gate(p.w_xo, p.w_ho, p.b_o, Act::Sigmoid);
    Var g = gate(p.w_xc, p.w_hc, p.b_c, p.candidate_act);
    Var c = add(t, mul(t, f, *prev.c), mul(t, i, g));
    Var h = mul(t, o, tanh_op(t, c));
    return {h, c};
}

Var gru_step(Tape& t, const GruVars& p, Var x, Var h_prev) {
    Var z = sigmoid(t, add(t, dense(t, h_prev, p.w_hz, std::nullopt), dense(t, x, p.w_xz, {p.b_z})));
    Var r = sigmoid(t, add(t, dense(t, h_prev, p.w_hr, std::nullopt), dense(t, x, p.w_xr, {p.b_r})));
    Var cand = tanh_op(
        t, add(t, dense(t, mul(t, r, h_prev), p.w_h, std::nullopt), dense(t, x, p.w_x, {p.b})));
    return add(t, mul(t, one_minus(t, z), h_prev), mul(t, z, cand));
}

namespace {

// Same-padded convolution keeping spatial size; bias broadcast per channel.
Var same_conv(Tape& t, Var x, Var k, std::optional<Var> b) {
    const int kh = t.value(k).extent(2);
    return conv2d(t, x, k, b, 1, kh - 1);
}

}  // namespace

Var conv_gru_step(Tape& t, const ConvGruVars& p, Var x, Var h_prev) {
    const Tensor& xv = t.value(x);
    const Tensor& hv = t.value(h_prev);
    if (xv.rank() != 3 || hv.rank() != 3 || xv.extent(1) != hv.extent(1) ||
        xv.extent(2) != hv.extent(2)) {
        throw DimensionError("conv_gru_step: spatial mismatch between input " + xv.shape_str() +
                             " and state " + hv.shape_str());
    }
    Var z = sigmoid(t, add(t, same_conv(t, h_prev, p.w_hz, std::nullopt),
                           same_conv(t, x, p.w_xz, {p.b_z})));
    Var r = sigmoid(t, add(t, same_conv(t, h_prev, p.w_hr, std::nullopt),
                           same_conv(t, x, p.w_xr, {p.b_r})));
    Var cand = tanh_op(t, add(t, same_conv(t, mul(t, r, h_prev), p.w_h, std::nullopt),
                              same_conv(t, x, p.w_x, {p.b})));
    return add(t, mul(t, one_minus(t, z), h_prev), mul(t, z, cand));
}

CellState zero_state(Tape& t, const CellVars& cell, const Shape& input_shape) {
    return std::visit(
        [&](const auto& c) -> CellState {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, SimpleRnnVars>) {
                return {t.leaf(Tensor({t.value(c.theta).extent(0)})), std::nullopt};
            } else if constexpr (std::is_same_v<T, LstmVars>) {
                const int n = t.value(c.w_hi).extent(0);
                return {t.leaf(Tensor({n})), t.leaf(Tensor({n}))};
            } else if constexpr (std::is_same_v<T, GruVars>) {
                return {t.leaf(Tensor({t.value(c.w_hz).extent(0)})), std::nullopt};
            } else {
                if (input_shape.size() != 3) {
                    throw DimensionError("Conv-GRU inputs must be CxHxW");
                }
                const int f = t.value(c.w_hz).extent(0);
                return {t.leaf(Tensor({f, input_shape[1], input_shape[2]})), std::nullopt};
            }
        },
        cell);
}

UnrollResult unroll(Tape& t, const CellVars& cell, const std::vector<Var>& inputs, CellState h0) {
    if (inputs.empty()) throw ArgumentError("unroll: empty input sequence");
    for (const Var& v : inputs) {
        require_same_shape(t.value(v), t.value(inputs.front()), "unroll inputs");
    }
    UnrollResult res;
    CellState s = h0;
    Var last_y = s.h;
    for (const Var& x : inputs) {
        std::visit(
            [&](const auto& c) {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, SimpleRnnVars>) {
                    auto [h, y] = simple_rnn_step(t, c, x, s.h);
                    s = {h, std::nullopt};
                    last_y = y;
                } else if constexpr (std::is_same_v<T, LstmVars>) {
                    s = lstm_step(t, c, x, s);
                    last_y = s.h;
                } else if constexpr (std::is_same_v<T, GruVars>) {
                    s = {gru_step(t, c, x, s.h), std::nullopt};
                    last_y = s.h;
                } else {
                    s = {conv_gru_step(t, c, x, s.h), std::nullopt};
                    last_y = s.h;
                }
            },
            cell);
        res.states.push_back(s);
    }
    res.last_output = last_y;
    return res;
}

double spectral_norm(const Tensor& m) {
    if (m.rank() != 2) throw DimensionError("spectral_norm: matrix expected");
    const int rows = m.extent(0), cols = m.extent(1);
    std::vector<double> v(static_cast<size_t>(cols), 1.0 / std::sqrt(static_cast<double>(cols)));
    std::vector<double> mv(static_cast<size_t>(rows));
    double prev = 0.0;
    for (int it = 0; it < 500; ++it) {
        for (int i = 0; i < rows; ++i) {
            double acc = 0.0;
            for (int j = 0; j < cols; ++j) acc += m.at(i, j) * v[static_cast<size_t>(j)];
            mv[static_cast<size_t>(i)] = acc;
        }
        std::vector<double> w(static_cast<size_t>(cols), 0.0);
        for (int i = 0; i < rows; ++i) {
            const double s = mv[static_cast<size_t>(i)];
            for (int j = 0; j < cols; ++j) w[static_cast<size_t>(j)] += m.at(i, j) * s;
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        for (size_t j = 0; j < w.size(); ++j) v[j] = w[j] / norm;
        const double sigma = std::sqrt(norm);
        if (it > 8 && std::abs(sigma - prev) <= 1e-13 * std::max(1.0, sigma)) return sigma;
        prev = sigma;
    }
    return prev;
}

std::vector<double> gradient_flow_norms(const SimpleRnnParams& p, int T, const Tensor& h0) {
    if (T < 2) throw ArgumentError("gradient_flow_norms: T must be >= 2");
    p.validate();
    const int n = p.theta.extent(0);
    if (h0.size() != n) {
        throw DimensionError("gradient_flow_norms: h0 length " + std::to_string(h0.size()) +
                             " does not match hidden size " + std::to_string(n));
    }
    // Zero-input trajectory h_t = theta * phi(h_{t-1}), t = 1..T, from h_0 = h0.
    std::vector<Tensor> traj;
    traj.reserve(static_cast<size_t>(T) + 1);
    traj.push_back(h0.reshaped({n}));
    for (int step = 1; step <= T; ++step) {
        const Tensor& prev = traj.back();
        Tensor phi_prev({n});
        for (int i = 0; i < n; ++i) {
            phi_prev[i] = p.phi == RnnPhi::Tanh ? std::tanh(prev[i]) : prev[i];
        }
        Tensor h({n});
        kernels::dense_forward(h.data(), phi_prev.data(), p.theta.data(), nullptr, n, n);
        traj.push_back(std::move(h));
    }
    auto step_jacobian = [&](int i) {
        // d h_i / d h_{i-1} = theta * diag(phi'(h_{i-1}))
        Tensor j({n, n});
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                const double hv = traj[static_cast<size_t>(i - 1)][c];
                const double d =
                    p.phi == RnnPhi::Tanh ? 1.0 - std::tanh(hv) * std::tanh(hv) : 1.0;
                j.at(r, c) = p.theta.at(r, c) * d;
            }
        }
        return j;
    };
    auto matmul = [&](const Tensor& a, const Tensor& b) {
        Tensor c({n, n});
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) {
                const double av = a.at(i, k);
                for (int j = 0; j < n; ++j) c.at(i, j) += av * b.at(k, j);
            }
        return c;
    };
    std::vector<double> norms_newest_first;
    Tensor prod = step_jacobian(T);
    norms_newest_first.push_back(spectral_norm(prod));  // k = T-1
    for (int k = T - 2; k >= 1; --k) {
        prod = matmul(prod, step_jacobian(k + 1));
        norms_newest_first.push_back(spectral_norm(prod));
    }
    return {norms_newest_first.rbegin(), norms_newest_first.rend()};
}

double gru_flow_norm(const GruParams& p, int T, const Tensor& h0) {
    if (T < 2) throw ArgumentError("gru_flow_norm: T must be >= 2");
    p.validate();
    const int n = p.hidden_size();
    const int m = p.w_xz.extent(1);
    // h_1 computed off-tape, then leafed so gradients stop there.
    Tensor h1;
    {
        Tape t0;
        GruVars vars = leaf_params(t0, p);
        Var h = t0.leaf(h0.reshaped({n}));
        Var x = t0.leaf(Tensor({m}));
        h1 = t0.value(gru_step(t0, vars, x, h));
    }
    Tensor jac({n, n});
    for (int row = 0; row < n; ++row) {
        Tape t;
        GruVars vars = leaf_params(t, p);
        Var h = t.leaf(h1);
        Var x = t.leaf(Tensor({m}));
        Var cur = h;
        for (int step = 2; step <= T; ++step) cur = gru_step(t, vars, x, cur);
        Tensor seed({n});
        seed[row] = 1.0;
        t.backward(cur, seed);
        const Tensor& g = t.grad(h);
        for (int col = 0; col < n; ++col) jac.at(row, col) = g[col];
    }
    return spectral_norm(jac);
}

}  // namespace rfcn
