#pragma once

// Forward kernels for the generator's layer set and their vector-Jacobian
// products. All functions are pure; the autograd tape in autograd.hpp
// composes them.

#include <cmath>
#include <cstddef>
#include <string>

#include "cglo/tensor.hpp"

namespace cglo::ops {

struct ConvTransposeGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

inline std::size_t conv_transpose_extent(std::size_t in, std::size_t k, const ConvTransposeGeometry& g) {
    const long out = static_cast<long>((in - 1) * g.stride + k) - 2 * static_cast<long>(g.padding);
    if (out < 1) {
        throw ShapeError("conv_transpose2d: output extent " + std::to_string(out) + " is not positive");
    }
    return static_cast<std::size_t>(out);
}

inline void check_conv_transpose_args(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                                      const ConvTransposeGeometry& g) {
    if (g.stride == 0) throw ShapeError("conv_transpose2d: stride must be positive");
    if (input.rank() != 3 || kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3)) {
        throw ShapeError("conv_transpose2d: expected input CinxHxW and kernel CinxCoutxKxK, got input " +
                         shape_str(input.shape()) + " kernel " + shape_str(kernel.shape()));
    }
    if (input.dim(0) != kernel.dim(0)) {
        throw ShapeError("conv_transpose2d: input channels of " + shape_str(input.shape()) +
                         " do not match kernel " + shape_str(kernel.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != kernel.dim(1)) {
        throw ShapeError("conv_transpose2d: bias " + shape_str(bias.shape()) + " does not match kernel " +
                         shape_str(kernel.shape()));
    }
}

/// Transposed 2-D convolution with PyTorch kernel layout (Cin, Cout, K, K).
/// Each input pixel scatters a KxK stamp into the output at stride spacing,
/// shifted up-left by `padding`.
inline Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                               const ConvTransposeGeometry& g) {
    check_conv_transpose_args(input, kernel, bias, g);
    const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t cout = kernel.dim(1), k = kernel.dim(2);
    const std::size_t oh = conv_transpose_extent(h, k, g), ow = conv_transpose_extent(w, k, g);
    const long pad = static_cast<long>(g.padding);

    Tensor out({cout, oh, ow});
    for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t i = co * oh * ow; i < (co + 1) * oh * ow; ++i) out[i] = bias[co];
    }
    const auto kd = kernel.data();
    auto od = out.data();
    for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const Real v = input.at(ci, y, x);
                if (v == 0.0) continue;
                for (std::size_t co = 0; co < cout; ++co) {
                    const Real* kk = &kd[((ci * cout + co) * k) * k];
                    Real* oc = &od[co * oh * ow];
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const long oy = static_cast<long>(y * g.stride + ky) - pad;
                        if (oy < 0 || oy >= static_cast<long>(oh)) continue;
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const long ox = static_cast<long>(x * g.stride + kx) - pad;
                            if (ox < 0 || ox >= static_cast<long>(ow)) continue;
                            oc[oy * static_cast<long>(ow) + ox] += v * kk[ky * k + kx];
                        }
                    }
                }
            }
        }
    }
    return out;
}

struct ConvTransposeGrads {
    Tensor input;
    Tensor kernel;
    Tensor bias;
};

inline ConvTransposeGrads conv_transpose2d_vjp(const Tensor& input, const Tensor& kernel,
                                               const Tensor& grad_out, const ConvTransposeGeometry& g) {
    const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t cout = kernel.dim(1), k = kernel.dim(2);
    const std::size_t oh = grad_out.dim(1), ow = grad_out.dim(2);
    const long pad = static_cast<long>(g.padding);

    ConvTransposeGrads gr{Tensor(input.shape()), Tensor(kernel.shape()), Tensor({cout})};
    const auto go = grad_out.data();
    const auto kd = kernel.data();
    auto gk = gr.kernel.data();
    for (std::size_t co = 0; co < cout; ++co) {
        Real s = 0.0;
        for (std::size_t i = co * oh * ow; i < (co + 1) * oh * ow; ++i) s += go[i];
        gr.bias[co] = s;
    }
    for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const Real v = input.at(ci, y, x);
                Real acc = 0.0;
                for (std::size_t co = 0; co < cout; ++co) {
                    const std::size_t kbase = ((ci * cout + co) * k) * k;
                    const Real* gc = &go[co * oh * ow];
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const long oy = static_cast<long>(y * g.stride + ky) - pad;
                        if (oy < 0 || oy >= static_cast<long>(oh)) continue;
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const long ox = static_cast<long>(x * g.stride + kx) - pad;
                            if (ox < 0 || ox >= static_cast<long>(ow)) continue;
                            const Real gv = gc[oy * static_cast<long>(ow) + ox];
                            acc += gv * kd[kbase + ky * k + kx];
                            gk[kbase + ky * k + kx] += gv * v;
                        }
                    }
                }
                gr.input.at(ci, y, x) = acc;
            }
        }
    }
    return gr;
}

/// Fully connected layer: out[j] = sum_k weight[j,k] * input[k] + bias[j].
inline Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.rank() != 1 || weight.rank() != 2 || bias.rank() != 1 || weight.dim(1) != input.dim(0) ||
        weight.dim(0) != bias.dim(0)) {
        throw ShapeError("dense: incompatible shapes input " + shape_str(input.shape()) + " weight " +
                         shape_str(weight.shape()) + " bias " + shape_str(bias.shape()));
    }
    const std::size_t m = weight.dim(0), n = weight.dim(1);
    Tensor out({m});
    for (std::size_t j = 0; j < m; ++j) {
        Real s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += weight[j * n + k] * input[k];
        out[j] = s + bias[j];
    }
    return out;
}

struct DenseGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

inline DenseGrads dense_vjp(const Tensor& input, const Tensor& weight, const Tensor& grad_out) {
    const std::size_t m = weight.dim(0), n = weight.dim(1);
    DenseGrads gr{Tensor(input.shape()), Tensor(weight.shape()), grad_out};
    for (std::size_t j = 0; j < m; ++j) {
        const Real g = grad_out[j];
        for (std::size_t k = 0; k < n; ++k) {
            gr.input[k] += weight[j * n + k] * g;
            gr.weight[j * n + k] = g * input[k];
        }
    }
    return gr;
}

inline Tensor relu(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

inline Tensor relu_vjp(const Tensor& input, const Tensor& grad_out) {
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(input[i] > 0.0)) g[i] = 0.0;
    }
    return g;
}

inline Tensor tanh(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data()) v = std::tanh(v);
    return out;
}

/// Takes the tanh *output*, not its input.
inline Tensor tanh_vjp(const Tensor& output, const Tensor& grad_out) {
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - output[i] * output[i];
    return g;
}

/// Mean absolute difference over all elements.
inline Real l1_loss(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "l1_loss");
    Real s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<Real>(a.size());
}

/// Gradient of l1_loss with respect to `a`, scaled by `grad_out`. The
/// subgradient at a == b is 0.
inline Tensor l1_loss_vjp(const Tensor& a, const Tensor& b, Real grad_out) {
    Tensor g(a.shape());
    const Real scale = grad_out / static_cast<Real>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Real d = a[i] - b[i];
        g[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
    }
    return g;
}

}  // namespace cglo::ops
