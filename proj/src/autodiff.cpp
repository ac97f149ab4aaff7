#include "mmf/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <unordered_set>
#include <utility>

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include "mmf/error.hpp"

namespace mmf::grad {

namespace {

using EigenMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EigenMat>;
using ConstMatMap = Eigen::Map<const EigenMat>;

[[maybe_unused]] ConstMatMap map2(const Tensor& t) {
    return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.dim(0)),
                       static_cast<Eigen::Index>(t.dim(1)));
}

MatMap map2(Tensor& t) {
    return MatMap(t.data(), static_cast<Eigen::Index>(t.dim(0)),
                  static_cast<Eigen::Index>(t.dim(1)));
}

Value make_op(Tensor result, const char* name, std::vector<Value> parents,
              std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>(std::move(result));
    node->op = name;
    bool needs = false;
    for (const auto& p : parents) {
        needs = needs || p->requires_grad;
    }
    node->requires_grad = needs;
    if (needs) {
        node->parents = std::move(parents);
        node->backprop = std::move(backprop);
    }
    return node;
}

void check_binary_shapes(const Value& a, const Value& b, const char* name) {
    if (a->value.same_shape(b->value)) return;
    if (a->value.numel() == 1 || b->value.numel() == 1) return;
    fail(ErrorCode::dimension, std::string(name) + ": shapes " + shape_string(a->value) +
                                   " and " + shape_string(b->value) + " do not match");
}

// Elementwise binary loop with scalar broadcast on either side.
template <typename F>
Tensor ew_binary(const Tensor& a, const Tensor& b, F&& f) {
    const bool a_scalar = a.numel() == 1;
    const bool b_scalar = b.numel() == 1;
    const Tensor& big = a_scalar ? b : a;
    Tensor out(big.shape());
    const std::size_t n = big.numel();
    for (std::size_t i = 0; i < n; ++i) {
        double av = a_scalar ? a[0] : a[i];
        double bv = b_scalar ? b[0] : b[i];
        out[i] = f(av, bv);
    }
    return out;
}

// Accumulates g into the parent, summing when the parent is a broadcast scalar.
void accumulate_maybe_scalar(Node& parent, const Tensor& g) {
    if (!parent.requires_grad) return;
    if (parent.value.same_shape(g)) {
        parent.accumulate(g);
        return;
    }
    require(parent.value.numel() == 1, ErrorCode::contract,
            "gradient shape mismatch in elementwise backward");
    double total = 0.0;
    for (std::size_t i = 0; i < g.numel(); ++i) total += g[i];
    Tensor red(parent.value.shape());
    red[0] = total;
    parent.accumulate(red);
}

void check_mask(const Tensor& mask, const char* name) {
    require(mask.rank() == 2, ErrorCode::dimension,
            std::string(name) + ": mask must be rank 2, got " + shape_string(mask));
    require(mask.is_binary(), ErrorCode::invalid_argument,
            std::string(name) + ": mask entries must be 0 or 1");
}

}  // namespace

void Node::accumulate(const Tensor& g) {
    if (!requires_grad) return;
    require(g.same_shape(value), ErrorCode::contract,
            std::string("gradient shape ") + shape_string(g) + " does not match value shape " +
                shape_string(value));
    Tensor& buf = grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) buf[i] += g[i];
}

Tensor& Node::grad_buffer() {
    if (!grad_allocated) {
        grad = Tensor(value.shape());
        grad_allocated = true;
    }
    return grad;
}

Value constant(Tensor t) {
    return std::make_shared<Node>(std::move(t));
}

Value parameter(Tensor t) {
    auto node = std::make_shared<Node>(std::move(t));
    node->requires_grad = true;
    node->op = "parameter";
    return node;
}

Value add(const Value& a, const Value& b) {
    check_binary_shapes(a, b, "add");
    Tensor out = ew_binary(a->value, b->value, [](double x, double y) { return x + y; });
    return make_op(std::move(out), "add", {a, b}, [a, b](Node& n) {
        accumulate_maybe_scalar(*a, n.grad);
        accumulate_maybe_scalar(*b, n.grad);
    });
}

Value sub(const Value& a, const Value& b) {
    check_binary_shapes(a, b, "sub");
    Tensor out = ew_binary(a->value, b->value, [](double x, double y) { return x - y; });
    return make_op(std::move(out), "sub", {a, b}, [a, b](Node& n) {
        accumulate_maybe_scalar(*a, n.grad);
        Tensor neg(n.grad.shape());
        for (std::size_t i = 0; i < neg.numel(); ++i) neg[i] = -n.grad[i];
        accumulate_maybe_scalar(*b, neg);
    });
}

Value mul(const Value& a, const Value& b) {
    check_binary_shapes(a, b, "mul");
    Tensor out = ew_binary(a->value, b->value, [](double x, double y) { return x * y; });
    return make_op(std::move(out), "mul", {a, b}, [a, b](Node& n) {
        accumulate_maybe_scalar(*a, ew_binary(n.grad, b->value, [](double g, double y) { return g * y; }));
        accumulate_maybe_scalar(*b, ew_binary(n.grad, a->value, [](double g, double x) { return g * x; }));
    });
}

Value div(const Value& a, const Value& b) {
    check_binary_shapes(a, b, "div");
    for (std::size_t i = 0; i < b->value.numel(); ++i) {
        require(b->value[i] != 0.0, ErrorCode::numeric, "div: division by exact zero");
    }
    Tensor out = ew_binary(a->value, b->value, [](double x, double y) { return x / y; });
    return make_op(std::move(out), "div", {a, b}, [a, b](Node& n) {
        accumulate_maybe_scalar(*a, ew_binary(n.grad, b->value, [](double g, double y) { return g / y; }));
        Tensor gb = ew_binary(a->value, b->value, [](double x, double y) { return -x / (y * y); });
        accumulate_maybe_scalar(*b, ew_binary(n.grad, gb, [](double g, double d) { return g * d; }));
    });
}

Value relu(const Value& a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] > 0.0 ? a->value[i] : 0.0;
    return make_op(std::move(out), "relu", {a}, [a](Node& n) {
        Tensor g(n.grad.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) {
            g[i] = a->value[i] > 0.0 ? n.grad[i] : 0.0;
        }
        a->accumulate(g);
    });
}

Value square(const Value& a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * a->value[i];
    return make_op(std::move(out), "square", {a}, [a](Node& n) {
        Tensor g(n.grad.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] = 2.0 * a->value[i] * n.grad[i];
        a->accumulate(g);
    });
}

Value softplus(const Value& a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double x = a->value[i];
        out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    }
    return make_op(std::move(out), "softplus", {a}, [a](Node& n) {
        Tensor g(n.grad.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) {
            double x = a->value[i];
            double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            g[i] = s * n.grad[i];
        }
        a->accumulate(g);
    });
}

Value scale(const Value& a, double s) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = s * a->value[i];
    return make_op(std::move(out), "scale", {a}, [a, s](Node& n) {
        Tensor g(n.grad.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] = s * n.grad[i];
        a->accumulate(g);
    });
}

Value matmul(const Value& a, const Value& b) {
    require(a->value.rank() == 2 && b->value.rank() == 2, ErrorCode::dimension,
            "matmul: operands must be rank 2, got " + shape_string(a->value) + " and " +
                shape_string(b->value));
    require(a->value.dim(1) == b->value.dim(0), ErrorCode::dimension,
            "matmul: inner dimensions disagree, " + shape_string(a->value) + " vs " +
                shape_string(b->value));
    Tensor out({a->value.dim(0), b->value.dim(1)});
    map2(out).noalias() = map2(a->value) * map2(b->value);
    return make_op(std::move(out), "matmul", {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor ga(a->value.shape());
            map2(ga).noalias() = map2(n.grad) * map2(b->value).transpose();
            a->accumulate(ga);
        }
        if (b->requires_grad) {
            Tensor gb(b->value.shape());
            map2(gb).noalias() = map2(a->value).transpose() * map2(n.grad);
            b->accumulate(gb);
        }
    });
}

Value transpose(const Value& a) {
    require(a->value.rank() == 2, ErrorCode::dimension,
            "transpose: operand must be rank 2, got " + shape_string(a->value));
    const std::size_t r = a->value.dim(0), c = a->value.dim(1);
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out.at2(j, i) = a->value.at2(i, j);
    }
    return make_op(std::move(out), "transpose", {a}, [a, r, c](Node& n) {
        Tensor g({r, c});
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) g.at2(i, j) = n.grad.at2(j, i);
        }
        a->accumulate(g);
    });
}

Value reshape(const Value& a, std::vector<std::size_t> shape) {
    Tensor out(shape);
    require(out.numel() == a->value.numel(), ErrorCode::dimension,
            "reshape: element count changes from " + shape_string(a->value) + " to " +
                shape_string(out));
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i];
    return make_op(std::move(out), "reshape", {a}, [a](Node& n) {
        Tensor g(a->value.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i];
        a->accumulate(g);
    });
}

Value sum(const Value& a) {
    double total = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) total += a->value[i];
    return make_op(Tensor::scalar(total), "sum", {a}, [a](Node& n) {
        Tensor g(a->value.shape(), n.grad[0]);
        a->accumulate(g);
    });
}

Value masked_reduce(const Value& z, const Tensor& mask, ReduceAxis axis) {
    require(z->value.rank() == 3, ErrorCode::dimension,
            "masked_reduce: z must be rank 3, got " + shape_string(z->value));
    check_mask(mask, "masked_reduce");
    const std::size_t N = z->value.dim(0), M = z->value.dim(1), C = z->value.dim(2);
    require(mask.dim(0) == N && mask.dim(1) == M, ErrorCode::dimension,
            "masked_reduce: mask " + shape_string(mask) + " does not match z " +
                shape_string(z->value));

    Tensor out;
    std::vector<double> denom;
    if (axis == ReduceAxis::rows) {
        denom.assign(M, 0.0);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t m = 0; m < M; ++m) denom[m] += mask.at2(n, m);
        out = Tensor({M, C});
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t m = 0; m < M; ++m) {
                const double b = mask.at2(n, m);
                if (b == 0.0) continue;
                for (std::size_t c = 0; c < C; ++c) out.at2(m, c) += b * z->value.at3(n, m, c);
            }
        }
        for (std::size_t m = 0; m < M; ++m) {
            if (denom[m] == 0.0) continue;
            for (std::size_t c = 0; c < C; ++c) out.at2(m, c) /= denom[m];
        }
    } else if (axis == ReduceAxis::cols) {
        denom.assign(N, 0.0);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t m = 0; m < M; ++m) denom[n] += mask.at2(n, m);
        out = Tensor({N, C});
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t m = 0; m < M; ++m) {
                const double b = mask.at2(n, m);
                if (b == 0.0) continue;
                for (std::size_t c = 0; c < C; ++c) out.at2(n, c) += b * z->value.at3(n, m, c);
            }
            if (denom[n] == 0.0) continue;
            for (std::size_t c = 0; c < C; ++c) out.at2(n, c) /= denom[n];
        }
    } else {
        denom.assign(1, 0.0);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t m = 0; m < M; ++m) denom[0] += mask.at2(n, m);
        out = Tensor({C});
        if (denom[0] != 0.0) {
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t m = 0; m < M; ++m) {
                    const double b = mask.at2(n, m);
                    if (b == 0.0) continue;
                    for (std::size_t c = 0; c < C; ++c) out[c] += b * z->value.at3(n, m, c);
                }
            }
            for (std::size_t c = 0; c < C; ++c) out[c] /= denom[0];
        }
    }

    Tensor mask_copy = mask;
    return make_op(std::move(out), "masked_reduce", {z},
                   [z, mask_copy, denom, axis, N, M, C](Node& n) {
                       Tensor g(z->value.shape());
                       for (std::size_t r = 0; r < N; ++r) {
                           for (std::size_t m = 0; m < M; ++m) {
                               const double b = mask_copy.at2(r, m);
                               if (b == 0.0) continue;
                               std::size_t d_index;
                               switch (axis) {
                                   case ReduceAxis::rows: d_index = m; break;
                                   case ReduceAxis::cols: d_index = r; break;
                                   default: d_index = 0; break;
                               }
                               const double d = denom[d_index];
                               if (d == 0.0) continue;
                               for (std::size_t c = 0; c < C; ++c) {
                                   double go;
                                   switch (axis) {
                                       case ReduceAxis::rows: go = n.grad.at2(m, c); break;
                                       case ReduceAxis::cols: go = n.grad.at2(r, c); break;
                                       default: go = n.grad[c]; break;
                                   }
                                   g.at3(r, m, c) = go * b / d;
                               }
                           }
                       }
                       z->accumulate(g);
                   });
}

Value broadcast(const Value& v, ReduceAxis axis, std::size_t rows, std::size_t cols) {
    std::size_t C = 0;
    if (axis == ReduceAxis::all) {
        require(v->value.rank() == 1, ErrorCode::dimension,
                "broadcast: all-axis input must be rank 1, got " + shape_string(v->value));
        C = v->value.dim(0);
    } else {
        require(v->value.rank() == 2, ErrorCode::dimension,
                "broadcast: input must be rank 2, got " + shape_string(v->value));
        const std::size_t expected = axis == ReduceAxis::rows ? cols : rows;
        require(v->value.dim(0) == expected, ErrorCode::dimension,
                "broadcast: leading dimension of " + shape_string(v->value) +
                    " does not match target");
        C = v->value.dim(1);
    }
    Tensor out({rows, cols, C});
    for (std::size_t n = 0; n < rows; ++n) {
        for (std::size_t m = 0; m < cols; ++m) {
            for (std::size_t c = 0; c < C; ++c) {
                double src;
                switch (axis) {
                    case ReduceAxis::rows: src = v->value.at2(m, c); break;
                    case ReduceAxis::cols: src = v->value.at2(n, c); break;
                    default: src = v->value[c]; break;
                }
                out.at3(n, m, c) = src;
            }
        }
    }
    return make_op(std::move(out), "broadcast", {v}, [v, axis, rows, cols, C](Node& n) {
        Tensor g(v->value.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t m = 0; m < cols; ++m) {
                for (std::size_t c = 0; c < C; ++c) {
                    const double go = n.grad.at3(r, m, c);
                    switch (axis) {
                        case ReduceAxis::rows: g.at2(m, c) += go; break;
                        case ReduceAxis::cols: g.at2(r, c) += go; break;
                        default: g[c] += go; break;
                    }
                }
            }
        }
        v->accumulate(g);
    });
}

Value mask_mul(const Value& z, const Tensor& mask) {
    check_mask(mask, "mask_mul");
    const std::size_t rank = z->value.rank();
    require(rank == 2 || rank == 3, ErrorCode::dimension,
            "mask_mul: z must be rank 2 or 3, got " + shape_string(z->value));
    const std::size_t N = z->value.dim(0), M = z->value.dim(1);
    require(mask.dim(0) == N && mask.dim(1) == M, ErrorCode::dimension,
            "mask_mul: mask " + shape_string(mask) + " does not match z " +
                shape_string(z->value));
    const std::size_t C = rank == 3 ? z->value.dim(2) : 1;
    Tensor out(z->value.shape());
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t m = 0; m < M; ++m) {
            const double b = mask.at2(n, m);
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t idx = (n * M + m) * C + c;
                out[idx] = b * z->value[idx];
            }
        }
    }
    Tensor mask_copy = mask;
    return make_op(std::move(out), "mask_mul", {z}, [z, mask_copy, N, M, C](Node& n) {
        Tensor g(z->value.shape());
        for (std::size_t r = 0; r < N; ++r) {
            for (std::size_t m = 0; m < M; ++m) {
                const double b = mask_copy.at2(r, m);
                if (b == 0.0) continue;
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t idx = (r * M + m) * C + c;
                    g[idx] = n.grad[idx];
                }
            }
        }
        z->accumulate(g);
    });
}

void backward(const Value& loss) {
    require(static_cast<bool>(loss), ErrorCode::invalid_argument, "backward: null value");
    require(loss->value.numel() == 1, ErrorCode::contract,
            "backward: loss must be scalar, got " + shape_string(loss->value));
    require(!loss->backward_done, ErrorCode::contract,
            "backward: already run on this loss; rebuild the graph first");
    loss->backward_done = true;
    if (!loss->requires_grad) return;

    // Reverse topological order via iterative post-order DFS, restricted to
    // the requires_grad subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* node;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.get(), 0});
    visited.insert(loss.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            Node* p = f.node->parents[f.next].get();
            ++f.next;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    loss->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) {
            if (!n->grad_allocated) n->grad_buffer();
            n->backprop(*n);
        }
    }
}

const char* reduce_axis_name(ReduceAxis axis) {
    switch (axis) {
        case ReduceAxis::rows: return "rows";
        case ReduceAxis::cols: return "cols";
        default: return "all";
    }
}

}  // namespace mmf::grad
