#pragma once

// Double-precision reference implementations used as finite-difference
// oracles. Everything here is independent of the mmcap engine: plain loops
// over std::vector<double>.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace refd {

using dvec = std::vector<double>;

inline dvec matmul(const dvec& a, const dvec& b, int64_t m, int64_t k, int64_t n) {
    dvec c(static_cast<size_t>(m * n), 0.0);
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            for (int64_t j = 0; j < n; ++j) {
                c[static_cast<size_t>(i * n + j)] +=
                    a[static_cast<size_t>(i * k + p)] * b[static_cast<size_t>(p * n + j)];
            }
        }
    }
    return c;
}

// x: [B,Cin,H,W], kernel: [Cout,Cin,kH,kW], same-size zero-padded
// cross-correlation; mask (optional, kH*kW) zeroes taps.
inline dvec conv2d(const dvec& x, const dvec& kern, const dvec& mask, int64_t batch,
                   int64_t c_in, int64_t h, int64_t w, int64_t c_out, int64_t k_h, int64_t k_w) {
    const int64_t pad_h = (k_h - 1) / 2;
    const int64_t pad_w = (k_w - 1) / 2;
    const int64_t plane = h * w;
    dvec y(static_cast<size_t>(batch * c_out * plane), 0.0);
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t co = 0; co < c_out; ++co) {
            for (int64_t oh = 0; oh < h; ++oh) {
                for (int64_t ow = 0; ow < w; ++ow) {
                    double acc = 0.0;
                    for (int64_t ci = 0; ci < c_in; ++ci) {
                        for (int64_t kh = 0; kh < k_h; ++kh) {
                            for (int64_t kw = 0; kw < k_w; ++kw) {
                                if (!mask.empty() && mask[static_cast<size_t>(kh * k_w + kw)] == 0.0) {
                                    continue;
                                }
                                const int64_t ih = oh - pad_h + kh;
                                const int64_t iw = ow - pad_w + kw;
                                if (ih < 0 || ih >= h || iw < 0 || iw >= w) {
                                    continue;
                                }
                                acc += x[static_cast<size_t>(((b * c_in + ci) * h + ih) * w + iw)] *
                                       kern[static_cast<size_t>(((co * c_in + ci) * k_h + kh) * k_w + kw)];
                            }
                        }
                    }
                    y[static_cast<size_t>(((b * c_out + co) * h + oh) * w + ow)] = acc;
                }
            }
        }
    }
    return y;
}

// Train-mode batch norm over [B,C,H,W] with biased variance.
inline dvec batchnorm_train(const dvec& x, const dvec& gamma, const dvec& beta, int64_t batch,
                            int64_t c, int64_t h, int64_t w, double eps = 1e-5) {
    const int64_t plane = h * w;
    const double m = static_cast<double>(batch * plane);
    dvec y(x.size());
    for (int64_t ci = 0; ci < c; ++ci) {
        double mean = 0.0;
        for (int64_t b = 0; b < batch; ++b) {
            for (int64_t i = 0; i < plane; ++i) {
                mean += x[static_cast<size_t>((b * c + ci) * plane + i)];
            }
        }
        mean /= m;
        double var = 0.0;
        for (int64_t b = 0; b < batch; ++b) {
            for (int64_t i = 0; i < plane; ++i) {
                const double d = x[static_cast<size_t>((b * c + ci) * plane + i)] - mean;
                var += d * d;
            }
        }
        var /= m;
        const double invstd = 1.0 / std::sqrt(var + eps);
        for (int64_t b = 0; b < batch; ++b) {
            for (int64_t i = 0; i < plane; ++i) {
                const size_t idx = static_cast<size_t>((b * c + ci) * plane + i);
                y[idx] = (x[idx] - mean) * invstd * gamma[static_cast<size_t>(ci)] +
                         beta[static_cast<size_t>(ci)];
            }
        }
    }
    return y;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Gate order [input, forget, candidate, output]; returns h' then c'
// concatenated.
inline std::pair<dvec, dvec> lstm_step(const dvec& x, const dvec& h, const dvec& c,
                                       const dvec& w_input, const dvec& w_hidden,
                                       const dvec& bias, int64_t batch, int64_t d_in,
                                       int64_t hidden) {
    dvec h_next(static_cast<size_t>(batch * hidden));
    dvec c_next(static_cast<size_t>(batch * hidden));
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t u = 0; u < hidden; ++u) {
            double g[4];
            for (int gate = 0; gate < 4; ++gate) {
                const int64_t row = gate * hidden + u;
                double acc = bias[static_cast<size_t>(row)];
                for (int64_t j = 0; j < d_in; ++j) {
                    acc += w_input[static_cast<size_t>(row * d_in + j)] *
                           x[static_cast<size_t>(b * d_in + j)];
                }
                for (int64_t j = 0; j < hidden; ++j) {
                    acc += w_hidden[static_cast<size_t>(row * hidden + j)] *
                           h[static_cast<size_t>(b * hidden + j)];
                }
                g[gate] = acc;
            }
            const double in_g = sigmoid(g[0]);
            const double forget_g = sigmoid(g[1]);
            const double cand = std::tanh(g[2]);
            const double out_g = sigmoid(g[3]);
            const double cn = forget_g * c[static_cast<size_t>(b * hidden + u)] + in_g * cand;
            c_next[static_cast<size_t>(b * hidden + u)] = cn;
            h_next[static_cast<size_t>(b * hidden + u)] = out_g * std::tanh(cn);
        }
    }
    return {h_next, c_next};
}

inline dvec relu(dvec v) {
    for (double& x : v) {
        x = x > 0.0 ? x : 0.0;
    }
    return v;
}

// Bottleneck residual block matching the model layout. Channel flow
// d -> 2d -> d/2 -> d; conv3 is 3x3 with the causal mask rows.
struct ResidualBlockRef {
    int64_t channels;
    dvec conv1, conv2, conv3;          // [2d,d,1,1], [d/2,2d,1,1], [d,d/2,3,3]
    dvec g1, b1, g2, b2, g3, b3;       // batch-norm affine per stage
    dvec mask;                         // 3x3 causal

    dvec forward(const dvec& x, int64_t batch, int64_t h, int64_t w) const {
        const int64_t half = channels / 2;
        dvec t = conv2d(x, conv1, {}, batch, channels, h, w, 2 * channels, 1, 1);
        t = relu(batchnorm_train(t, g1, b1, batch, 2 * channels, h, w));
        t = conv2d(t, conv2, {}, batch, 2 * channels, h, w, half, 1, 1);
        t = relu(batchnorm_train(t, g2, b2, batch, half, h, w));
        t = conv2d(t, conv3, mask, batch, half, h, w, channels, 3, 3);
        t = batchnorm_train(t, g3, b3, batch, channels, h, w);
        for (size_t i = 0; i < t.size(); ++i) {
            t[i] += x[i];
        }
        return t;
    }
};

inline dvec softmax_row(const dvec& u) {
    double mx = u[0];
    for (double v : u) {
        mx = std::max(mx, v);
    }
    double denom = 0.0;
    dvec out(u.size());
    for (size_t i = 0; i < u.size(); ++i) {
        out[i] = std::exp(u[i] - mx);
        denom += out[i];
    }
    for (double& v : out) {
        v /= denom;
    }
    return out;
}

// SE pipeline on one [T,D] slice: softmax(fc3(relu(fc2(fc1_per_pos(F))))).
struct SeRef {
    int64_t t_c, d_c;
    dvec w1, b1; // [1,D], [1]
    dvec w2, b2; // [T/2,T], [T/2]
    dvec w3, b3; // [T,T/2], [T]

    dvec forward(const dvec& f) const {
        const int64_t half = t_c / 2;
        dvec u(static_cast<size_t>(t_c));
        for (int64_t j = 0; j < t_c; ++j) {
            double acc = b1[0];
            for (int64_t q = 0; q < d_c; ++q) {
                acc += w1[static_cast<size_t>(q)] * f[static_cast<size_t>(j * d_c + q)];
            }
            u[static_cast<size_t>(j)] = acc;
        }
        dvec mid(static_cast<size_t>(half));
        for (int64_t i = 0; i < half; ++i) {
            double acc = b2[static_cast<size_t>(i)];
            for (int64_t j = 0; j < t_c; ++j) {
                acc += w2[static_cast<size_t>(i * t_c + j)] * u[static_cast<size_t>(j)];
            }
            mid[static_cast<size_t>(i)] = acc > 0.0 ? acc : 0.0;
        }
        dvec out(static_cast<size_t>(t_c));
        for (int64_t i = 0; i < t_c; ++i) {
            double acc = b3[static_cast<size_t>(i)];
            for (int64_t j = 0; j < half; ++j) {
                acc += w3[static_cast<size_t>(i * half + j)] * mid[static_cast<size_t>(j)];
            }
            out[static_cast<size_t>(i)] = acc;
        }
        return softmax_row(out);
    }
};

// logits = x W^T + b over [R,D] rows, then mean masked cross entropy.
inline double projection_loss(const dvec& x, const dvec& w, const dvec& b,
                              const std::vector<int32_t>& targets,
                              const std::vector<int32_t>& mask, int64_t rows, int64_t d,
                              int64_t vocab) {
    double total = 0.0;
    int64_t count = 0;
    for (int64_t r = 0; r < rows; ++r) {
        if (mask[static_cast<size_t>(r)] == 0) {
            continue;
        }
        dvec logits(static_cast<size_t>(vocab));
        for (int64_t v = 0; v < vocab; ++v) {
            double acc = b[static_cast<size_t>(v)];
            for (int64_t q = 0; q < d; ++q) {
                acc += x[static_cast<size_t>(r * d + q)] * w[static_cast<size_t>(v * d + q)];
            }
            logits[static_cast<size_t>(v)] = acc;
        }
        double mx = logits[0];
        for (double v : logits) {
            mx = std::max(mx, v);
        }
        double denom = 0.0;
        for (double v : logits) {
            denom += std::exp(v - mx);
        }
        total += std::log(denom) + mx - logits[static_cast<size_t>(targets[static_cast<size_t>(r)])];
        ++count;
    }
    return total / static_cast<double>(count);
}

// Central finite difference of a scalar function at one coordinate.
template <typename F>
double central_diff(dvec& params, size_t index, const F& f, double h = 1e-3) {
    const double saved = params[index];
    params[index] = saved + h;
    const double up = f();
    params[index] = saved - h;
    const double down = f();
    params[index] = saved;
    return (up - down) / (2.0 * h);
}

} // namespace refd
