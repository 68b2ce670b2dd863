#pragma once

// Minimal dense float64 tensor engine with reverse-mode gradients: just
// enough to express the decoder and verify it against finite differences.
// Each forward op records a node holding its inputs and a backward closure;
// backward() runs the recorded computation in reverse topological order and
// then breaks the graph links so the episode's memory is reclaimed. There is
// no hidden global state besides the thread-local grad-mode flag.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "dcap/errors.hpp"

namespace dcap::nn {

using EigenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenCMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct Node {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;  // allocated on demand, matches values
    bool requires_grad = false;
    const char* tag = "";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

inline thread_local int g_no_grad_depth = 0;

// Disables graph recording for the enclosed scope (evaluation, finite
// differences). Values are still computed.
struct NoGradGuard {
    NoGradGuard() { ++g_no_grad_depth; }
    ~NoGradGuard() { --g_no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return g_no_grad_depth == 0; }

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        std::size_t total = 1;
        for (int d : shape) total *= static_cast<std::size_t>(d);
        n->shape = std::move(shape);
        n->values.assign(total, 0.0);
        n->requires_grad = requires_grad;
        n->tag = "leaf";
        return Tensor(n);
    }

    static Tensor from(std::vector<int> shape, std::vector<double> values,
                       bool requires_grad = false) {
        std::size_t total = 1;
        for (int d : shape) total *= static_cast<std::size_t>(d);
        if (total != values.size())
            throw ShapeMismatch("tensor init: shape " + shape_str(shape) + " needs " +
                                std::to_string(total) + " values, got " +
                                std::to_string(values.size()));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->values = std::move(values);
        n->requires_grad = requires_grad;
        n->tag = "leaf";
        return Tensor(n);
    }

    bool defined() const { return node_ != nullptr; }
    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& ptr() const { return node_; }

    const std::vector<int>& shape() const { return node_->shape; }
    int rows() const { return node_->shape.at(0); }
    int cols() const { return node_->shape.size() > 1 ? node_->shape.at(1) : 1; }
    std::size_t size() const { return node_->size(); }

    std::vector<double>& values() const { return node_->values; }
    double value() const {
        if (node_->size() != 1) throw NonScalarLoss("expected a scalar tensor");
        return node_->values[0];
    }
    bool requires_grad() const { return node_->requires_grad; }
    const std::vector<double>& grad() const { return node_->grad; }

  private:
    std::shared_ptr<Node> node_;
};

namespace detail {

inline Tensor make_op(const char* tag, std::vector<int> shape,
                      std::vector<std::shared_ptr<Node>> parents,
                      std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    std::size_t total = 1;
    for (int d : shape) total *= static_cast<std::size_t>(d);
    n->shape = std::move(shape);
    n->values.assign(total, 0.0);
    n->tag = tag;
    bool track = grad_enabled();
    bool any = false;
    if (track)
        for (const auto& p : parents) any = any || p->requires_grad;
    if (track && any) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(n);
}

inline void check_same_shape(const char* tag, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeMismatch(std::string(tag) + ": " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops.

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("add", a, b);
    Tensor out = detail::make_op("add", a.shape(), {a.ptr(), b.ptr()}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.size(); ++i) pb.grad[i] += n.grad[i];
        }
    });
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values()[i] = a.values()[i] + b.values()[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("sub", a, b);
    Tensor out = detail::make_op("sub", a.shape(), {a.ptr(), b.ptr()}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.size(); ++i) pb.grad[i] -= n.grad[i];
        }
    });
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values()[i] = a.values()[i] - b.values()[i];
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("mul", a, b);
    Tensor out = detail::make_op("mul", a.shape(), {a.ptr(), b.ptr()}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += n.grad[i] * pb.values[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.size(); ++i) pb.grad[i] += n.grad[i] * pa.values[i];
        }
    });
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values()[i] = a.values()[i] * b.values()[i];
    return out;
}

inline Tensor scale(const Tensor& a, double c) {
    Tensor out = detail::make_op("scale", a.shape(), {a.ptr()}, [c](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += c * n.grad[i];
    });
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = c * a.values()[i];
    return out;
}

inline Tensor add_scalar(const Tensor& a, double c) {
    Tensor out = detail::make_op("add_scalar", a.shape(), {a.ptr()}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += n.grad[i];
    });
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.values()[i] + c;
    return out;
}

inline Tensor tanh(const Tensor& a) {
    Tensor out = detail::make_op("tanh", a.shape(), {a.ptr()}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < n.size(); ++i)
            pa.grad[i] += n.grad[i] * (1.0 - n.values[i] * n.values[i]);
    });
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = std::tanh(a.values()[i]);
    return out;
}

inline Tensor abs(const Tensor& a) {
    Tensor out = detail::make_op("abs", a.shape(), {a.ptr()}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < n.size(); ++i) {
            double s = pa.values[i] > 0.0 ? 1.0 : (pa.values[i] < 0.0 ? -1.0 : 0.0);
            pa.grad[i] += n.grad[i] * s;
        }
    });
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = std::abs(a.values()[i]);
    return out;
}

inline Tensor sum(const Tensor& a) {
    Tensor out = detail::make_op("sum", {1}, {a.ptr()}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < pa.values.size(); ++i) pa.grad[i] += n.grad[0];
    });
    out.values()[0] = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Matrix ops (2-D only).

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
        throw ShapeMismatch("matmul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = detail::make_op("matmul", {m, n}, {a.ptr(), b.ptr()}, [m, k, n](Node& nd) {
        Node& pa = *nd.parents[0];
        Node& pb = *nd.parents[1];
        EigenCMap gc(nd.grad.data(), m, n);
        EigenCMap av(pa.values.data(), m, k);
        EigenCMap bv(pb.values.data(), k, n);
        if (pa.requires_grad) {
            pa.ensure_grad();
            EigenMap ga(pa.grad.data(), m, k);
            ga.noalias() += gc * bv.transpose();
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            EigenMap gb(pb.grad.data(), k, n);
            gb.noalias() += av.transpose() * gc;
        }
    });
    EigenCMap av(a.values().data(), m, k);
    EigenCMap bv(b.values().data(), k, n);
    EigenMap ov(out.values().data(), m, n);
    ov.noalias() = av * bv;
    return out;
}

inline Tensor transpose(const Tensor& a) {
    if (a.shape().size() != 2) throw ShapeMismatch("transpose: " + shape_str(a.shape()));
    const int m = a.rows(), n = a.cols();
    Tensor out = detail::make_op("transpose", {n, m}, {a.ptr()}, [m, n](Node& nd) {
        Node& pa = *nd.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) pa.grad[j * n + i] += nd.grad[i * m + j];
    });
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.values()[j * m + i] = a.values()[i * n + j];
    return out;
}

// [n, m] + [1, m], broadcast over rows.
inline Tensor add_rowvec(const Tensor& a, const Tensor& r) {
    if (a.shape().size() != 2 || r.shape().size() != 2 || r.rows() != 1 || r.cols() != a.cols())
        throw ShapeMismatch("add_rowvec: " + shape_str(a.shape()) + " vs " + shape_str(r.shape()));
    const int m = a.rows(), n = a.cols();
    Tensor out = detail::make_op("add_rowvec", a.shape(), {a.ptr(), r.ptr()}, [m, n](Node& nd) {
        Node& pa = *nd.parents[0];
        Node& pr = *nd.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < nd.size(); ++i) pa.grad[i] += nd.grad[i];
        }
        if (pr.requires_grad) {
            pr.ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) pr.grad[j] += nd.grad[i * n + j];
        }
    });
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.values()[i * n + j] = a.values()[i * n + j] + r.values()[j];
    return out;
}

inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
    if (a.shape().size() != 2 || c0 < 0 || c1 > a.cols() || c0 >= c1)
        throw ShapeMismatch("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                            ") of " + shape_str(a.shape()));
    const int m = a.rows(), n = a.cols(), w = c1 - c0;
    Tensor out = detail::make_op("slice_cols", {m, w}, {a.ptr()}, [m, n, w, c0](Node& nd) {
        Node& pa = *nd.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) pa.grad[i * n + c0 + j] += nd.grad[i * w + j];
    });
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) out.values()[i * w + j] = a.values()[i * n + c0 + j];
    return out;
}

inline Tensor slice_rows(const Tensor& a, int r0, int r1) {
    if (a.shape().size() != 2 || r0 < 0 || r1 > a.rows() || r0 >= r1)
        throw ShapeMismatch("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                            ") of " + shape_str(a.shape()));
    const int n = a.cols(), h = r1 - r0;
    Tensor out = detail::make_op("slice_rows", {h, n}, {a.ptr()}, [n, h, r0](Node& nd) {
        Node& pa = *nd.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < n; ++j) pa.grad[(r0 + i) * n + j] += nd.grad[i * n + j];
    });
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < n; ++j) out.values()[i * n + j] = a.values()[(r0 + i) * n + j];
    return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols: empty input");
    const int m = parts[0].rows();
    int total = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::vector<int> widths;
    for (const Tensor& t : parts) {
        if (t.shape().size() != 2 || t.rows() != m)
            throw ShapeMismatch("concat_cols: " + shape_str(parts[0].shape()) + " vs " +
                                shape_str(t.shape()));
        total += t.cols();
        widths.push_back(t.cols());
        parents.push_back(t.ptr());
    }
    Tensor out = detail::make_op("concat_cols", {m, total}, parents, [m, total, widths](Node& nd) {
        int off = 0;
        for (std::size_t p = 0; p < nd.parents.size(); ++p) {
            Node& pp = *nd.parents[p];
            int w = widths[p];
            if (pp.requires_grad) {
                pp.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < w; ++j) pp.grad[i * w + j] += nd.grad[i * total + off + j];
            }
            off += w;
        }
    });
    int off = 0;
    for (const Tensor& t : parts) {
        int w = t.cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) out.values()[i * total + off + j] = t.values()[i * w + j];
        off += w;
    }
    return out;
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_rows: empty input");
    const int n = parts[0].cols();
    int total = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::vector<int> heights;
    for (const Tensor& t : parts) {
        if (t.shape().size() != 2 || t.cols() != n)
            throw ShapeMismatch("concat_rows: " + shape_str(parts[0].shape()) + " vs " +
                                shape_str(t.shape()));
        total += t.rows();
        heights.push_back(t.rows());
        parents.push_back(t.ptr());
    }
    Tensor out = detail::make_op("concat_rows", {total, n}, parents, [n, heights](Node& nd) {
        int off = 0;
        for (std::size_t p = 0; p < nd.parents.size(); ++p) {
            Node& pp = *nd.parents[p];
            int h = heights[p];
            if (pp.requires_grad) {
                pp.ensure_grad();
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < n; ++j) pp.grad[i * n + j] += nd.grad[(off + i) * n + j];
            }
            off += h;
        }
    });
    int off = 0;
    for (const Tensor& t : parts) {
        for (std::size_t i = 0; i < t.size(); ++i) out.values()[off * n + i] = t.values()[i];
        off += t.rows();
    }
    return out;
}

// ---------------------------------------------------------------------------
// backward

// Reverse-mode accumulation from a scalar loss. Gradients are added into
// every reachable node with requires_grad; the recorded graph is released
// afterwards (leaf tensors and their grads survive).
inline void backward(const Tensor& loss) {
    if (loss.size() != 1) throw NonScalarLoss("backward expects a scalar, got " +
                                              shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{&loss.node(), 0}};
    seen.insert(&loss.node());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !seen.count(p) && p->backward_fn) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node().ensure_grad();
    loss.node().grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }

    // NaN scan: report the op whose gradient went non-finite.
    for (Node* n : order)
        for (double g : n->grad)
            if (!std::isfinite(g))
                throw NonFiniteActivation(std::string("non-finite gradient at node '") + n->tag +
                                          "'");

    // Break links so intermediate nodes are freed.
    for (Node* n : order) {
        n->parents.clear();
        n->backward_fn = nullptr;
    }
}

}  // namespace dcap::nn
