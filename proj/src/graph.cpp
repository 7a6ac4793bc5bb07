#include "advlab/graph.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "advlab/parallel.hpp"

namespace advlab {

namespace {

std::atomic<int> g_compute_jobs{1};

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Input: return "input";
        case OpKind::MatMul: return "matmul";
        case OpKind::BiasAdd: return "bias_add";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::Relu: return "relu";
        case OpKind::AvgPool2: return "avg_pool2";
        case OpKind::Flatten: return "flatten";
        case OpKind::SoftmaxXent: return "softmax_xent";
    }
    return "?";
}

[[noreturn]] void node_error(NodeId id, OpKind kind, const std::string& what) {
    throw std::invalid_argument("node " + std::to_string(id) + " (" + op_name(kind) + "): " + what);
}

struct ConvDims {
    std::size_t n, c, h, w, f, kh, kw, oh, ow, patch;
};

ConvDims conv_dims(const Shape& x, const Shape& k, int stride, int pad) {
    ConvDims d;
    d.n = x[0];
    d.c = x[1];
    d.h = x[2];
    d.w = x[3];
    d.f = k[0];
    d.kh = k[2];
    d.kw = k[3];
    long oh = (static_cast<long>(d.h) + 2 * pad - static_cast<long>(d.kh)) / stride + 1;
    long ow = (static_cast<long>(d.w) + 2 * pad - static_cast<long>(d.kw)) / stride + 1;
    d.oh = static_cast<std::size_t>(oh);
    d.ow = static_cast<std::size_t>(ow);
    d.patch = d.c * d.kh * d.kw;
    return d;
}

// Scatters one sample's input patches into a [patch, oh*ow] column matrix.
void im2col(const double* x, const ConvDims& d, int stride, int pad, double* col) {
    const std::size_t ohw = d.oh * d.ow;
    for (std::size_t c = 0; c < d.c; ++c) {
        const double* xc = x + c * d.h * d.w;
        for (std::size_t ki = 0; ki < d.kh; ++ki) {
            for (std::size_t kj = 0; kj < d.kw; ++kj) {
                double* row = col + ((c * d.kh + ki) * d.kw + kj) * ohw;
                for (std::size_t oi = 0; oi < d.oh; ++oi) {
                    long ih = static_cast<long>(oi) * stride - pad + static_cast<long>(ki);
                    double* out = row + oi * d.ow;
                    if (ih < 0 || ih >= static_cast<long>(d.h)) {
                        std::memset(out, 0, d.ow * sizeof(double));
                        continue;
                    }
                    const double* xrow = xc + static_cast<std::size_t>(ih) * d.w;
                    for (std::size_t oj = 0; oj < d.ow; ++oj) {
                        long iw = static_cast<long>(oj) * stride - pad + static_cast<long>(kj);
                        out[oj] = (iw < 0 || iw >= static_cast<long>(d.w)) ? 0.0 : xrow[iw];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: accumulates a column matrix back onto the input layout.
void col2im_add(const double* col, const ConvDims& d, int stride, int pad, double* x) {
    const std::size_t ohw = d.oh * d.ow;
    for (std::size_t c = 0; c < d.c; ++c) {
        double* xc = x + c * d.h * d.w;
        for (std::size_t ki = 0; ki < d.kh; ++ki) {
            for (std::size_t kj = 0; kj < d.kw; ++kj) {
                const double* row = col + ((c * d.kh + ki) * d.kw + kj) * ohw;
                for (std::size_t oi = 0; oi < d.oh; ++oi) {
                    long ih = static_cast<long>(oi) * stride - pad + static_cast<long>(ki);
                    if (ih < 0 || ih >= static_cast<long>(d.h)) continue;
                    double* xrow = xc + static_cast<std::size_t>(ih) * d.w;
                    const double* in = row + oi * d.ow;
                    for (std::size_t oj = 0; oj < d.ow; ++oj) {
                        long iw = static_cast<long>(oj) * stride - pad + static_cast<long>(kj);
                        if (iw >= 0 && iw < static_cast<long>(d.w)) xrow[iw] += in[oj];
                    }
                }
            }
        }
    }
}

void softmax_row(const double* z, std::size_t c, double* out) {
    double m = z[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, z[j]);
    double sum = 0;
    for (std::size_t j = 0; j < c; ++j) {
        out[j] = std::exp(z[j] - m);
        sum += out[j];
    }
    for (std::size_t j = 0; j < c; ++j) out[j] /= sum;
}

}  // namespace

void set_compute_jobs(int jobs) { g_compute_jobs.store(jobs < 1 ? 1 : jobs); }
int compute_jobs() { return g_compute_jobs.load(); }

void matmul_raw(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                bool transpose_a, bool transpose_b, bool accumulate) {
    int jobs = compute_jobs();
    bool threaded = jobs > 1 && m >= 2 && m * k * n >= (1u << 16);
    auto row_task = [&](std::size_t i) {
        double* ci = c + i * n;
        if (!accumulate) std::memset(ci, 0, n * sizeof(double));
        if (!transpose_a && !transpose_b) {
            for (std::size_t kk = 0; kk < k; ++kk) {
                double av = a[i * k + kk];
                const double* bk = b + kk * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
            }
        } else if (transpose_a && !transpose_b) {
            for (std::size_t kk = 0; kk < k; ++kk) {
                double av = a[kk * m + i];
                const double* bk = b + kk * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
            }
        } else if (!transpose_a && transpose_b) {
            const double* ai = a + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const double* bj = b + j * k;
                double s = 0;
                for (std::size_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
                ci[j] += s;
            }
        } else {
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0;
                for (std::size_t kk = 0; kk < k; ++kk) s += a[kk * m + i] * b[j * k + kk];
                ci[j] += s;
            }
        }
    };
    if (threaded) {
        parallel_for(m, jobs, row_task);
    } else {
        for (std::size_t i = 0; i < m; ++i) row_task(i);
    }
}

const ComputeGraph::Node& ComputeGraph::node(NodeId id) const {
    check_exists(id);
    return nodes_[static_cast<std::size_t>(id)];
}

ComputeGraph::Node& ComputeGraph::node(NodeId id) {
    check_exists(id);
    return nodes_[static_cast<std::size_t>(id)];
}

void ComputeGraph::check_exists(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw std::invalid_argument("node " + std::to_string(id) + ": no such node");
    }
}

NodeId ComputeGraph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId ComputeGraph::input(Shape shape) {
    if (shape.empty()) throw std::invalid_argument("input: empty shape");
    Node n;
    n.kind = OpKind::Input;
    n.out_shape = std::move(shape);
    return push(std::move(n));
}

NodeId ComputeGraph::matmul(NodeId a, NodeId b) {
    const Shape& sa = node(a).out_shape;
    const Shape& sb = node(b).out_shape;
    NodeId id = static_cast<NodeId>(nodes_.size());
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
        node_error(id, OpKind::MatMul, "incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
    }
    Node n;
    n.kind = OpKind::MatMul;
    n.in = {a, b};
    n.out_shape = {sa[0], sb[1]};
    return push(std::move(n));
}

NodeId ComputeGraph::bias_add(NodeId x, NodeId bias) {
    const Shape& sx = node(x).out_shape;
    const Shape& sb = node(bias).out_shape;
    NodeId id = static_cast<NodeId>(nodes_.size());
    bool ok = sb.size() == 1 && ((sx.size() == 2 && sb[0] == sx[1]) || (sx.size() == 4 && sb[0] == sx[1]));
    if (!ok) node_error(id, OpKind::BiasAdd, "bias " + shape_str(sb) + " does not broadcast over " + shape_str(sx));
    Node n;
    n.kind = OpKind::BiasAdd;
    n.in = {x, bias};
    n.out_shape = sx;
    return push(std::move(n));
}

NodeId ComputeGraph::conv2d(NodeId x, NodeId kernel, int stride, int pad) {
    const Shape& sx = node(x).out_shape;
    const Shape& sk = node(kernel).out_shape;
    NodeId id = static_cast<NodeId>(nodes_.size());
    if (stride != 1 && stride != 2) node_error(id, OpKind::Conv2d, "stride must be 1 or 2");
    if (pad < 0) node_error(id, OpKind::Conv2d, "negative padding");
    if (sx.size() != 4 || sk.size() != 4) {
        node_error(id, OpKind::Conv2d, "expects image [N,C,H,W] and kernel [F,C,kh,kw]");
    }
    if (sk[1] != sx[1]) node_error(id, OpKind::Conv2d, "channel mismatch " + shape_str(sx) + " vs " + shape_str(sk));
    long oh = (static_cast<long>(sx[2]) + 2 * pad - static_cast<long>(sk[2])) / stride + 1;
    long ow = (static_cast<long>(sx[3]) + 2 * pad - static_cast<long>(sk[3])) / stride + 1;
    if (oh < 1 || ow < 1) node_error(id, OpKind::Conv2d, "kernel larger than padded input");
    Node n;
    n.kind = OpKind::Conv2d;
    n.in = {x, kernel};
    n.stride = stride;
    n.pad = pad;
    n.out_shape = {sx[0], sk[0], static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
    return push(std::move(n));
}

NodeId ComputeGraph::relu(NodeId x) {
    Node n;
    n.kind = OpKind::Relu;
    n.in = {x};
    n.out_shape = node(x).out_shape;
    return push(std::move(n));
}

NodeId ComputeGraph::avg_pool2(NodeId x) {
    const Shape& sx = node(x).out_shape;
    NodeId id = static_cast<NodeId>(nodes_.size());
    if (sx.size() != 4) node_error(id, OpKind::AvgPool2, "expects [N,C,H,W], got " + shape_str(sx));
    if (sx[2] % 2 != 0 || sx[3] % 2 != 0) node_error(id, OpKind::AvgPool2, "H and W must be even in " + shape_str(sx));
    Node n;
    n.kind = OpKind::AvgPool2;
    n.in = {x};
    n.out_shape = {sx[0], sx[1], sx[2] / 2, sx[3] / 2};
    return push(std::move(n));
}

NodeId ComputeGraph::flatten(NodeId x) {
    const Shape& sx = node(x).out_shape;
    NodeId id = static_cast<NodeId>(nodes_.size());
    if (sx.size() < 2) node_error(id, OpKind::Flatten, "expects rank >= 2, got " + shape_str(sx));
    Node n;
    n.kind = OpKind::Flatten;
    n.in = {x};
    n.out_shape = {sx[0], shape_numel(sx) / sx[0]};
    return push(std::move(n));
}

NodeId ComputeGraph::softmax_xent(NodeId logits, NodeId labels) {
    const Shape& sz = node(logits).out_shape;
    const Shape& sy = node(labels).out_shape;
    NodeId id = static_cast<NodeId>(nodes_.size());
    if (sz.size() != 2) node_error(id, OpKind::SoftmaxXent, "logits must be [N,C], got " + shape_str(sz));
    if (sy.size() != 1 || sy[0] != sz[0]) {
        node_error(id, OpKind::SoftmaxXent, "labels must be [N] matching logits " + shape_str(sz));
    }
    Node n;
    n.kind = OpKind::SoftmaxXent;
    n.in = {logits, labels};
    n.out_shape = {1};
    return push(std::move(n));
}

void ComputeGraph::bind(NodeId input_node, Tensor value) {
    Node& n = node(input_node);
    if (n.kind != OpKind::Input) node_error(input_node, n.kind, "only input nodes can be bound");
    if (value.shape() != n.out_shape) {
        node_error(input_node, n.kind,
                   "bound value shape " + shape_str(value.shape()) + " != declared " + shape_str(n.out_shape));
    }
    n.value = std::move(value);
    n.bound = true;
    for (Node& m : nodes_) {
        if (m.kind != OpKind::Input) m.computed = false;
    }
}

const Tensor& ComputeGraph::value(NodeId id) const {
    const Node& n = node(id);
    if (n.kind == OpKind::Input) {
        if (!n.bound) node_error(id, n.kind, "input has no bound value");
        return n.value;
    }
    if (!n.computed) node_error(id, n.kind, "value requested before forward");
    return n.value;
}

void ComputeGraph::eval_node(NodeId id) {
    Node& n = node(id);
    const Tensor& a = value(n.in[0]);
    switch (n.kind) {
        case OpKind::Input:
            return;
        case OpKind::MatMul: {
            const Tensor& b = value(n.in[1]);
            n.value = Tensor(n.out_shape);
            matmul_raw(a.data(), b.data(), n.value.data(), a.dim(0), a.dim(1), b.dim(1));
            break;
        }
        case OpKind::BiasAdd: {
            const Tensor& b = value(n.in[1]);
            n.value = a;
            double* out = n.value.data();
            if (a.rank() == 2) {
                std::size_t rows = a.dim(0), cols = a.dim(1);
                for (std::size_t i = 0; i < rows; ++i) {
                    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += b[j];
                }
            } else {
                std::size_t chans = a.dim(1), plane = a.dim(2) * a.dim(3);
                for (std::size_t i = 0; i < a.dim(0); ++i) {
                    for (std::size_t c = 0; c < chans; ++c) {
                        double bv = b[c];
                        double* p = out + (i * chans + c) * plane;
                        for (std::size_t q = 0; q < plane; ++q) p[q] += bv;
                    }
                }
            }
            break;
        }
        case OpKind::Conv2d: {
            const Tensor& k = value(n.in[1]);
            ConvDims d = conv_dims(a.shape(), k.shape(), n.stride, n.pad);
            n.value = Tensor(n.out_shape);
            std::size_t ohw = d.oh * d.ow;
            int jobs = compute_jobs();
            parallel_for(d.n, jobs > static_cast<int>(d.n) ? static_cast<int>(d.n) : jobs, [&](std::size_t i) {
                std::vector<double> col(d.patch * ohw);
                im2col(a.data() + i * d.c * d.h * d.w, d, n.stride, n.pad, col.data());
                matmul_raw(k.data(), col.data(), n.value.data() + i * d.f * ohw, d.f, d.patch, ohw);
            });
            break;
        }
        case OpKind::Relu: {
            n.value = a;
            for (double& x : n.value.values()) x = x > 0 ? x : 0.0;
            break;
        }
        case OpKind::AvgPool2: {
            n.value = Tensor(n.out_shape);
            std::size_t planes = a.dim(0) * a.dim(1), h = a.dim(2), w = a.dim(3);
            std::size_t oh = h / 2, ow = w / 2;
            const double* in = a.data();
            double* out = n.value.data();
            for (std::size_t p = 0; p < planes; ++p) {
                const double* ip = in + p * h * w;
                double* op = out + p * oh * ow;
                for (std::size_t i = 0; i < oh; ++i) {
                    for (std::size_t j = 0; j < ow; ++j) {
                        const double* b0 = ip + 2 * i * w + 2 * j;
                        op[i * ow + j] = 0.25 * (b0[0] + b0[1] + b0[w] + b0[w + 1]);
                    }
                }
            }
            break;
        }
        case OpKind::Flatten: {
            n.value = a.reshaped(n.out_shape);
            break;
        }
        case OpKind::SoftmaxXent: {
            const Tensor& y = value(n.in[1]);
            std::size_t rows = a.dim(0), cols = a.dim(1);
            double total = 0;
            for (std::size_t i = 0; i < rows; ++i) {
                double label = y[i];
                auto cls = static_cast<long>(label);
                if (static_cast<double>(cls) != label || cls < 0 || cls >= static_cast<long>(cols)) {
                    node_error(id, n.kind, "label " + std::to_string(label) + " invalid for " +
                                               std::to_string(cols) + " classes");
                }
                const double* z = a.data() + i * cols;
                double m = z[0];
                for (std::size_t j = 1; j < cols; ++j) m = std::max(m, z[j]);
                double sum = 0;
                for (std::size_t j = 0; j < cols; ++j) sum += std::exp(z[j] - m);
                total += m + std::log(sum) - z[static_cast<std::size_t>(cls)];
            }
            n.value = Tensor::scalar(total / static_cast<double>(rows));
            break;
        }
    }
    n.computed = true;
#ifndef NDEBUG
    if (!n.value.all_finite()) {
        throw std::runtime_error("node " + std::to_string(id) + " (" + op_name(n.kind) +
                                 "): non-finite value in forward");
    }
#endif
}

const Tensor& ComputeGraph::forward(NodeId out) {
    check_exists(out);
    // Mark ancestors of `out`, then evaluate them in topological (id) order.
    std::vector<char> needed(nodes_.size(), 0);
    needed[static_cast<std::size_t>(out)] = 1;
    for (NodeId id = out; id >= 0; --id) {
        if (!needed[static_cast<std::size_t>(id)]) continue;
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.kind == OpKind::Input && !n.bound) {
            node_error(id, n.kind, "required input is unbound");
        }
        for (NodeId dep : n.in) needed[static_cast<std::size_t>(dep)] = 1;
    }
    for (NodeId id = 0; id <= out; ++id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (needed[static_cast<std::size_t>(id)] && n.kind != OpKind::Input && !n.computed) {
            eval_node(id);
        }
    }
    const Tensor& result = value(out);
    if (!result.all_finite()) {
        throw std::runtime_error("node " + std::to_string(out) + " (" + op_name(node(out).kind) +
                                 "): non-finite forward output");
    }
    return result;
}

void ComputeGraph::backprop_node(NodeId id, const Tensor& out_grad, std::vector<Tensor>& grads,
                                 std::vector<char>& has_grad) {
    Node& n = node(id);
    auto accum = [&](NodeId target, auto&& fill) {
        const Node& t = node(target);
        auto ti = static_cast<std::size_t>(target);
        if (!has_grad[ti]) {
            grads[ti] = Tensor::zeros(t.out_shape);
            has_grad[ti] = 1;
        }
        fill(grads[ti]);
    };
    switch (n.kind) {
        case OpKind::Input:
            return;
        case OpKind::MatMul: {
            const Tensor& a = value(n.in[0]);
            const Tensor& b = value(n.in[1]);
            accum(n.in[0], [&](Tensor& g) {
                matmul_raw(out_grad.data(), b.data(), g.data(), a.dim(0), b.dim(1), a.dim(1), false, true, true);
            });
            accum(n.in[1], [&](Tensor& g) {
                matmul_raw(a.data(), out_grad.data(), g.data(), a.dim(1), a.dim(0), b.dim(1), true, false, true);
            });
            break;
        }
        case OpKind::BiasAdd: {
            const Tensor& a = value(n.in[0]);
            accum(n.in[0], [&](Tensor& g) {
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += out_grad[i];
            });
            accum(n.in[1], [&](Tensor& g) {
                if (a.rank() == 2) {
                    std::size_t rows = a.dim(0), cols = a.dim(1);
                    for (std::size_t i = 0; i < rows; ++i) {
                        for (std::size_t j = 0; j < cols; ++j) g[j] += out_grad[i * cols + j];
                    }
                } else {
                    std::size_t chans = a.dim(1), plane = a.dim(2) * a.dim(3);
                    for (std::size_t i = 0; i < a.dim(0); ++i) {
                        for (std::size_t c = 0; c < chans; ++c) {
                            const double* p = out_grad.data() + (i * chans + c) * plane;
                            double s = 0;
                            for (std::size_t q = 0; q < plane; ++q) s += p[q];
                            g[c] += s;
                        }
                    }
                }
            });
            break;
        }
        case OpKind::Conv2d: {
            const Tensor& a = value(n.in[0]);
            const Tensor& k = value(n.in[1]);
            ConvDims d = conv_dims(a.shape(), k.shape(), n.stride, n.pad);
            std::size_t ohw = d.oh * d.ow;
            std::vector<double> col(d.patch * ohw);
            std::vector<double> dcol(d.patch * ohw);
            accum(n.in[0], [](Tensor&) {});
            accum(n.in[1], [](Tensor&) {});
            Tensor& gx = grads[static_cast<std::size_t>(n.in[0])];
            Tensor& gk = grads[static_cast<std::size_t>(n.in[1])];
            for (std::size_t i = 0; i < d.n; ++i) {
                const double* gout = out_grad.data() + i * d.f * ohw;
                im2col(a.data() + i * d.c * d.h * d.w, d, n.stride, n.pad, col.data());
                matmul_raw(gout, col.data(), gk.data(), d.f, ohw, d.patch, false, true, true);
                matmul_raw(k.data(), gout, dcol.data(), d.patch, d.f, ohw, true, false, false);
                col2im_add(dcol.data(), d, n.stride, n.pad, gx.data() + i * d.c * d.h * d.w);
            }
            break;
        }
        case OpKind::Relu: {
            const Tensor& a = value(n.in[0]);
            accum(n.in[0], [&](Tensor& g) {
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    if (a[i] > 0) g[i] += out_grad[i];
                }
            });
            break;
        }
        case OpKind::AvgPool2: {
            const Tensor& a = value(n.in[0]);
            std::size_t planes = a.dim(0) * a.dim(1), h = a.dim(2), w = a.dim(3);
            std::size_t oh = h / 2, ow = w / 2;
            accum(n.in[0], [&](Tensor& g) {
                for (std::size_t p = 0; p < planes; ++p) {
                    const double* gp = out_grad.data() + p * oh * ow;
                    double* xp = g.data() + p * h * w;
                    for (std::size_t i = 0; i < oh; ++i) {
                        for (std::size_t j = 0; j < ow; ++j) {
                            double v = 0.25 * gp[i * ow + j];
                            double* b0 = xp + 2 * i * w + 2 * j;
                            b0[0] += v;
                            b0[1] += v;
                            b0[w] += v;
                            b0[w + 1] += v;
                        }
                    }
                }
            });
            break;
        }
        case OpKind::Flatten: {
            accum(n.in[0], [&](Tensor& g) {
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += out_grad[i];
            });
            break;
        }
        case OpKind::SoftmaxXent: {
            const Tensor& z = value(n.in[0]);
            const Tensor& y = value(n.in[1]);
            std::size_t rows = z.dim(0), cols = z.dim(1);
            double scale = out_grad[0] / static_cast<double>(rows);
            accum(n.in[0], [&](Tensor& g) {
                std::vector<double> p(cols);
                for (std::size_t i = 0; i < rows; ++i) {
                    softmax_row(z.data() + i * cols, cols, p.data());
                    auto cls = static_cast<std::size_t>(y[i]);
                    for (std::size_t j = 0; j < cols; ++j) {
                        g[i * cols + j] += scale * (p[j] - (j == cls ? 1.0 : 0.0));
                    }
                }
            });
            break;
        }
    }
}

GradMap ComputeGraph::vjp(NodeId out, const Tensor& seed, std::span<const NodeId> wrt) {
    const Node& o = node(out);
    if (o.kind != OpKind::Input && !o.computed) {
        node_error(out, o.kind, "vjp requested before forward");
    }
    if (seed.shape() != o.out_shape) {
        node_error(out, o.kind, "seed shape " + shape_str(seed.shape()) + " != node shape " + shape_str(o.out_shape));
    }
    std::vector<Tensor> grads(nodes_.size());
    std::vector<char> has_grad(nodes_.size(), 0);
    grads[static_cast<std::size_t>(out)] = seed;
    has_grad[static_cast<std::size_t>(out)] = 1;
    // Reverse topological order; each node's adjoint is complete when visited.
    for (NodeId id = out; id >= 0; --id) {
        if (!has_grad[static_cast<std::size_t>(id)]) continue;
        backprop_node(id, grads[static_cast<std::size_t>(id)], grads, has_grad);
    }
    GradMap result;
    for (NodeId id : wrt) {
        const Node& n = node(id);
        if (has_grad[static_cast<std::size_t>(id)]) {
            result.emplace(id, std::move(grads[static_cast<std::size_t>(id)]));
        } else {
            result.emplace(id, Tensor::zeros(n.out_shape));
        }
    }
    return result;
}

GradMap ComputeGraph::grad(NodeId loss, std::span<const NodeId> wrt) {
    const Node& n = node(loss);
    if (shape_numel(n.out_shape) != 1) {
        node_error(loss, n.kind, "loss is not scalar, shape " + shape_str(n.out_shape));
    }
    return vjp(loss, Tensor(n.out_shape, {1.0}), wrt);
}

GradMap ComputeGraph::finite_diff_grad(NodeId loss, std::span<const NodeId> wrt, double h) {
    if (!(h > 0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
    const Node& n = node(loss);
    if (shape_numel(n.out_shape) != 1) {
        node_error(loss, n.kind, "loss is not scalar, shape " + shape_str(n.out_shape));
    }
    GradMap result;
    for (NodeId id : wrt) {
        Node& leaf = node(id);
        if (leaf.kind != OpKind::Input || !leaf.bound) {
            node_error(id, leaf.kind, "finite differences need a bound input node");
        }
        Tensor base = leaf.value;
        Tensor estimate(base.shape());
        for (std::size_t i = 0; i < base.numel(); ++i) {
            Tensor probe = base;
            probe[i] = base[i] + h;
            bind(id, probe);
            double plus = forward(loss)[0];
            probe[i] = base[i] - h;
            bind(id, probe);
            double minus = forward(loss)[0];
            estimate[i] = (plus - minus) / (2 * h);
        }
        bind(id, base);
        result.emplace(id, std::move(estimate));
    }
    forward(loss);
    return result;
}

}  // namespace advlab
