#pragma once

// Network building blocks on top of the tensor engine: row-wise softmax and
// layer norm, linear layers, multi-head attention, and the two quaternion
// ops the pose head needs.

#include <cmath>
#include <vector>

#include "dcap/nn/tensor.hpp"

namespace dcap::nn {

inline constexpr double kLayerNormEps = 1e-5;

// Softmax over the last axis of an [n, m] tensor.
inline Tensor softmax_last(const Tensor& a) {
    if (a.shape().size() != 2) throw ShapeMismatch("softmax_last: " + shape_str(a.shape()));
    const int m = a.rows(), n = a.cols();
    Tensor out = detail::make_op("softmax", a.shape(), {a.ptr()}, [m, n](Node& nd) {
        Node& pa = *nd.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int i = 0; i < m; ++i) {
            const double* y = nd.values.data() + i * n;
            const double* gy = nd.grad.data() + i * n;
            double dotv = 0.0;
            for (int j = 0; j < n; ++j) dotv += gy[j] * y[j];
            for (int j = 0; j < n; ++j) pa.grad[i * n + j] += y[j] * (gy[j] - dotv);
        }
    });
    for (int i = 0; i < m; ++i) {
        const double* x = a.values().data() + i * n;
        double mx = x[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) denom += std::exp(x[j] - mx);
        for (int j = 0; j < n; ++j) out.values()[i * n + j] = std::exp(x[j] - mx) / denom;
    }
    return out;
}

// Normalize each row to zero mean / unit variance; no learned affine.
inline Tensor layer_norm_last(const Tensor& a) {
    if (a.shape().size() != 2) throw ShapeMismatch("layer_norm: " + shape_str(a.shape()));
    const int m = a.rows(), n = a.cols();
    // Stash the per-row 1/sigma for the backward pass.
    auto inv_sigma = std::make_shared<std::vector<double>>(m);
    Tensor out = detail::make_op("layer_norm", a.shape(), {a.ptr()}, [m, n, inv_sigma](Node& nd) {
        Node& pa = *nd.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int i = 0; i < m; ++i) {
            const double* y = nd.values.data() + i * n;
            const double* gy = nd.grad.data() + i * n;
            double mean_g = 0.0, mean_gy = 0.0;
            for (int j = 0; j < n; ++j) {
                mean_g += gy[j];
                mean_gy += gy[j] * y[j];
            }
            mean_g /= n;
            mean_gy /= n;
            double is = (*inv_sigma)[i];
            for (int j = 0; j < n; ++j)
                pa.grad[i * n + j] += is * (gy[j] - mean_g - y[j] * mean_gy);
        }
    });
    for (int i = 0; i < m; ++i) {
        const double* x = a.values().data() + i * n;
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += x[j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= n;
        double is = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_sigma)[i] = is;
        for (int j = 0; j < n; ++j) out.values()[i * n + j] = (x[j] - mean) * is;
    }
    return out;
}

// x [n, in] * w [in, out] + b [1, out]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_rowvec(matmul(x, w), b);
}

struct MhaParams {
    Tensor wq, wk, wv, wo;  // [d, d]
    Tensor bq, bk, bv, bo;  // [1, d]
};

// Standard multi-head attention: per-head scaled dot-product with scale
// 1/sqrt(d/h), heads concatenated, output projection applied.
inline Tensor mha(const Tensor& query, const Tensor& keys, const Tensor& values,
                  const MhaParams& p, int heads) {
    const int d = query.cols();
    if (keys.cols() != d || values.cols() != d || keys.rows() != values.rows())
        throw ShapeMismatch("mha: query " + shape_str(query.shape()) + ", keys " +
                            shape_str(keys.shape()) + ", values " + shape_str(values.shape()));
    if (heads < 1 || d % heads != 0)
        throw ShapeMismatch("mha: d=" + std::to_string(d) + " not divisible by heads=" +
                            std::to_string(heads));
    const int dh = d / heads;

    Tensor q = linear(query, p.wq, p.bq);
    Tensor k = linear(keys, p.wk, p.bk);
    Tensor v = linear(values, p.wv, p.bv);

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(heads);
    const double s = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor attn = softmax_last(scale(matmul(qh, transpose(kh)), s));
        head_outputs.push_back(matmul(attn, vh));
    }
    return linear(concat_cols(head_outputs), p.wo, p.bo);
}

// Row-wise L2 normalization (used on quaternion deltas).
inline Tensor l2_normalize_rows(const Tensor& a) {
    if (a.shape().size() != 2) throw ShapeMismatch("l2_normalize: " + shape_str(a.shape()));
    const int m = a.rows(), n = a.cols();
    auto inv_norm = std::make_shared<std::vector<double>>(m);
    Tensor out = detail::make_op("l2_normalize", a.shape(), {a.ptr()}, [m, n, inv_norm](Node& nd) {
        Node& pa = *nd.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int i = 0; i < m; ++i) {
            const double* y = nd.values.data() + i * n;
            const double* gy = nd.grad.data() + i * n;
            double dotv = 0.0;
            for (int j = 0; j < n; ++j) dotv += gy[j] * y[j];
            double in = (*inv_norm)[i];
            for (int j = 0; j < n; ++j) pa.grad[i * n + j] += in * (gy[j] - y[j] * dotv);
        }
    });
    for (int i = 0; i < m; ++i) {
        const double* x = a.values().data() + i * n;
        double n2 = 0.0;
        for (int j = 0; j < n; ++j) n2 += x[j] * x[j];
        double in = 1.0 / std::sqrt(n2);
        (*inv_norm)[i] = in;
        for (int j = 0; j < n; ++j) out.values()[i * n + j] = x[j] * in;
    }
    return out;
}

// Hamilton product of two [1, 4] quaternions (w, x, y, z).
inline Tensor quat_mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != std::vector<int>{1, 4} || b.shape() != std::vector<int>{1, 4})
        throw ShapeMismatch("quat_mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = detail::make_op("quat_mul", {1, 4}, {a.ptr(), b.ptr()}, [](Node& nd) {
        Node& pa = *nd.parents[0];
        Node& pb = *nd.parents[1];
        const double* av = pa.values.data();
        const double* bv = pb.values.data();
        const double* g = nd.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            pa.grad[0] += g[0] * bv[0] + g[1] * bv[1] + g[2] * bv[2] + g[3] * bv[3];
            pa.grad[1] += -g[0] * bv[1] + g[1] * bv[0] - g[2] * bv[3] + g[3] * bv[2];
            pa.grad[2] += -g[0] * bv[2] + g[1] * bv[3] + g[2] * bv[0] - g[3] * bv[1];
            pa.grad[3] += -g[0] * bv[3] - g[1] * bv[2] + g[2] * bv[1] + g[3] * bv[0];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            pb.grad[0] += g[0] * av[0] + g[1] * av[1] + g[2] * av[2] + g[3] * av[3];
            pb.grad[1] += -g[0] * av[1] + g[1] * av[0] + g[2] * av[3] - g[3] * av[2];
            pb.grad[2] += -g[0] * av[2] - g[1] * av[3] + g[2] * av[0] + g[3] * av[1];
            pb.grad[3] += -g[0] * av[3] + g[1] * av[2] - g[2] * av[1] + g[3] * av[0];
        }
    });
    const double* av = a.values().data();
    const double* bv = b.values().data();
    out.values()[0] = av[0] * bv[0] - av[1] * bv[1] - av[2] * bv[2] - av[3] * bv[3];
    out.values()[1] = av[0] * bv[1] + av[1] * bv[0] + av[2] * bv[3] - av[3] * bv[2];
    out.values()[2] = av[0] * bv[2] - av[1] * bv[3] + av[2] * bv[0] + av[3] * bv[1];
    out.values()[3] = av[0] * bv[3] + av[1] * bv[2] - av[2] * bv[1] + av[3] * bv[0];
    return out;
}

}  // namespace dcap::nn
