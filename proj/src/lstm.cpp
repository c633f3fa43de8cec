#include "mmcap/lstm.hpp"

#include "mmcap/init.hpp"

namespace mmcap {

LstmParams::LstmParams(int64_t input_dim, int64_t hidden_dim, std::mt19937& rng) {
    w_input = Tensor::zeros({4 * hidden_dim, input_dim}, true);
    w_hidden = Tensor::zeros({4 * hidden_dim, hidden_dim}, true);
    bias = Tensor::zeros({4 * hidden_dim}, true);
    fill_xavier(w_input, rng, input_dim, hidden_dim);
    fill_xavier(w_hidden, rng, hidden_dim, hidden_dim);
    // Forget-gate bias at 1 keeps early cell states flowing.
    auto b = bias.data();
    for (int64_t i = hidden_dim; i < 2 * hidden_dim; ++i) {
        b[static_cast<size_t>(i)] = 1.0f;
    }
}

std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmParams& p) {
    const int64_t hidden = p.hidden_dim();
    require(x.rank() == 2 && h.rank() == 2 && c.rank() == 2, "bad_shape",
            "lstm_step expects [B,D] inputs");
    require(x.dim(1) == p.input_dim(), "shape_mismatch",
            "lstm_step: input dim " + std::to_string(x.dim(1)) + " != " +
                std::to_string(p.input_dim()));
    require(h.dim(1) == hidden && c.dim(1) == hidden, "shape_mismatch",
            "lstm_step: state dim mismatch");
    require(x.dim(0) == h.dim(0) && x.dim(0) == c.dim(0), "shape_mismatch",
            "lstm_step: batch mismatch");

    Tensor gates = ops::add_bias(
        ops::add(ops::matmul_nt(x, p.w_input), ops::matmul_nt(h, p.w_hidden)), p.bias);

    Tensor in_gate = ops::sigmoid(ops::slice_lastdim(gates, 0, hidden));
    Tensor forget_gate = ops::sigmoid(ops::slice_lastdim(gates, hidden, hidden));
    Tensor candidate = ops::tanh_op(ops::slice_lastdim(gates, 2 * hidden, hidden));
    Tensor out_gate = ops::sigmoid(ops::slice_lastdim(gates, 3 * hidden, hidden));

    Tensor c_next = ops::add(ops::mul(forget_gate, c), ops::mul(in_gate, candidate));
    Tensor h_next = ops::mul(out_gate, ops::tanh_op(c_next));
    return {h_next, c_next};
}

Tensor lstm_encode(const Tensor& features, const LstmParams& p) {
    require(features.rank() == 3, "bad_shape", "lstm_encode expects [B,T,D]");
    const int64_t batch = features.dim(0);
    const int64_t steps = features.dim(1);
    require(steps >= 1, "bad_shape", "lstm_encode: need at least one timestep");

    Tensor h = Tensor::zeros({batch, p.hidden_dim()});
    Tensor c = Tensor::zeros({batch, p.hidden_dim()});
    std::vector<Tensor> hidden_rows;
    hidden_rows.reserve(static_cast<size_t>(steps));
    for (int64_t t = 0; t < steps; ++t) {
        Tensor x_t = ops::select_axis1(features, t);
        auto [h_next, c_next] = lstm_step(x_t, h, c, p);
        h = h_next;
        c = c_next;
        hidden_rows.push_back(h);
    }
    return ops::stack_axis1(hidden_rows);
}

} // namespace mmcap
