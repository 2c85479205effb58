#include "octasam/autograd.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include "octasam/errors.hpp"

namespace octasam::ag {

namespace {

thread_local bool t_grad_enabled = true;

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

// Creates the result node; attaches parents and the backward closure only if needed.
Var make(Matrix value, std::initializer_list<Var> inputs, std::function<void(Node&)> bw) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (t_grad_enabled) {
        for (const auto& in : inputs)
            if (in.requires_grad()) node->requires_grad = true;
        if (node->requires_grad) {
            for (const auto& in : inputs) node->parents.push_back(in.node());
            node->backward = std::move(bw);
        }
    }
    return Var(node);
}

Var make_n(Matrix value, std::span<const Var> inputs, std::function<void(Node&)> bw) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (t_grad_enabled) {
        for (const auto& in : inputs)
            if (in.requires_grad()) node->requires_grad = true;
        if (node->requires_grad) {
            for (const auto& in : inputs) node->parents.push_back(in.node());
            node->backward = std::move(bw);
        }
    }
    return Var(node);
}

void push(Node& parent, const Matrix& g) {
    if (parent.requires_grad) parent.accumulate(g);
}

void same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": " + shape(a.value()) + " vs " + shape(b.value()));
}

}  // namespace

void Node::accumulate(const Matrix& g) {
    if (grad.size() == 0)
        grad = g;
    else
        grad += g;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

Var constant(Matrix value) { return leaf(std::move(value), false); }

Var leaf(Matrix value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(node);
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape(a.value()) + " x " + shape(b.value()));
    return make(a.value() * b.value(), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
        if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
    });
}

Var add(const Var& a, const Var& b) {
    same_shape(a, b, "add");
    return make(a.value() + b.value(), {a, b}, [](Node& n) {
        push(*n.parents[0], n.grad);
        push(*n.parents[1], n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    same_shape(a, b, "sub");
    return make(a.value() - b.value(), {a, b}, [](Node& n) {
        push(*n.parents[0], n.grad);
        push(*n.parents[1], -n.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    same_shape(a, b, "mul");
    return make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) pa.accumulate(n.grad.cwiseProduct(pb.value));
        if (pb.requires_grad) pb.accumulate(n.grad.cwiseProduct(pa.value));
    });
}

Var scale(const Var& a, double s) {
    return make(a.value() * s, {a}, [s](Node& n) { push(*n.parents[0], n.grad * s); });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw ShapeError("add_row: " + shape(a.value()) + " + " + shape(row.value()));
    Matrix v = a.value().rowwise() + row.value().row(0);
    return make(std::move(v), {a, row}, [](Node& n) {
        push(*n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad.colwise().sum());
    });
}

Var mul_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw ShapeError("mul_row: " + shape(a.value()) + " * " + shape(row.value()));
    Matrix v = a.value().array().rowwise() * row.value().row(0).array();
    return make(std::move(v), {a, row}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pr = *n.parents[1];
        if (pa.requires_grad) pa.accumulate((n.grad.array().rowwise() * pr.value.row(0).array()).matrix());
        if (pr.requires_grad) pr.accumulate(n.grad.cwiseProduct(pa.value).colwise().sum());
    });
}

Var transpose(const Var& a) {
    return make(a.value().transpose(), {a}, [](Node& n) { push(*n.parents[0], n.grad.transpose()); });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols out of range");
    return make(a.value().middleCols(start, count), {a}, [start, count](Node& n) {
        Node& p = *n.parents[0];
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleCols(start, count) = n.grad;
        p.accumulate(g);
    });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows out of range");
    return make(a.value().middleRows(start, count), {a}, [start, count](Node& n) {
        Node& p = *n.parents[0];
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleRows(start, count) = n.grad;
        p.accumulate(g);
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != parts[0].rows()) throw ShapeError("concat_cols: row count mismatch");
        cols += p.cols();
    }
    Matrix v(parts[0].rows(), cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return make_n(std::move(v), parts, [](Node& n) {
        Eigen::Index at = 0;
        for (auto& p : n.parents) {
            const auto c = p->value.cols();
            if (p->requires_grad) p->accumulate(n.grad.middleCols(at, c));
            at += c;
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != parts[0].cols()) throw ShapeError("concat_rows: column count mismatch");
        rows += p.rows();
    }
    Matrix v(rows, parts[0].cols());
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    return make_n(std::move(v), parts, [](Node& n) {
        Eigen::Index at = 0;
        for (auto& p : n.parents) {
            const auto r = p->value.rows();
            if (p->requires_grad) p->accumulate(n.grad.middleRows(at, r));
            at += r;
        }
    });
}

Var normalize_rows(const Var& a, double eps) {
    const Matrix& x = a.value();
    const auto d = static_cast<double>(x.cols());
    Eigen::VectorXd mean = x.rowwise().mean();
    Matrix centered = x.colwise() - mean;
    Eigen::VectorXd inv_std = ((centered.array().square().rowwise().sum() / d) + eps).rsqrt().matrix();
    Matrix y = centered.array().colwise() * inv_std.array();
    return make(y, {a}, [y, inv_std, d](Node& n) {
        // dx = inv_std * (g - mean(g) - y * mean(g*y))
        const Eigen::VectorXd g_mean = n.grad.rowwise().mean();
        const Eigen::VectorXd gy_mean = n.grad.cwiseProduct(y).rowwise().sum() / d;
        Matrix dx = n.grad.colwise() - g_mean;
        dx -= (y.array().colwise() * gy_mean.array()).matrix();
        dx = dx.array().colwise() * inv_std.array();
        n.parents[0]->accumulate(dx);
    });
}

Var gelu(const Var& a) {
    const Matrix& x = a.value();
    Matrix y = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
    return make(std::move(y), {a}, [](Node& n) {
        const Matrix& x = n.parents[0]->value;
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        Matrix d = x.unaryExpr([inv_sqrt_2pi](double v) {
            return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        });
        n.parents[0]->accumulate(n.grad.cwiseProduct(d));
    });
}

Var relu(const Var& a) {
    return make(a.value().cwiseMax(0.0), {a}, [](Node& n) {
        const Matrix& x = n.parents[0]->value;
        n.parents[0]->accumulate((x.array() > 0).select(n.grad, 0.0));
    });
}

Var sigmoid(const Var& a) {
    Matrix y = a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    return make(y, {a}, [y](Node& n) { n.parents[0]->accumulate(n.grad.cwiseProduct(y - y.cwiseProduct(y))); });
}

Var softmax_rows(const Var& a) {
    Matrix y = a.value();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        y.row(r).array() -= y.row(r).maxCoeff();
        y.row(r) = y.row(r).array().exp().matrix();
        y.row(r) /= y.row(r).sum();
    }
    return make(y, {a}, [y](Node& n) {
        const Eigen::VectorXd dot = n.grad.cwiseProduct(y).rowwise().sum();
        Matrix dx = (n.grad.colwise() - dot).cwiseProduct(y);
        n.parents[0]->accumulate(dx);
    });
}

Var sum(const Var& a) {
    Matrix v(1, 1);
    v(0, 0) = a.value().sum();
    return make(std::move(v), {a}, [](Node& n) {
        const Matrix& x = n.parents[0]->value;
        n.parents[0]->accumulate(Matrix::Constant(x.rows(), x.cols(), n.grad(0, 0)));
    });
}

Var pixel_shuffle(const Var& a, int grid_h, int grid_w) {
    if (a.rows() != static_cast<Eigen::Index>(grid_h) * grid_w || a.cols() % 4 != 0)
        throw ShapeError("pixel_shuffle: " + shape(a.value()) + " for grid " + std::to_string(grid_h) + "x" +
                         std::to_string(grid_w));
    const Eigen::Index c = a.cols() / 4;
    const int out_w = 2 * grid_w;
    // out row index for (token, sub-pixel)
    auto out_row = [=](int gy, int gx, int dy, int dx) {
        return static_cast<Eigen::Index>(2 * gy + dy) * out_w + (2 * gx + dx);
    };
    const Matrix& x = a.value();
    Matrix y(static_cast<Eigen::Index>(4) * grid_h * grid_w, c);
    for (int gy = 0; gy < grid_h; ++gy)
        for (int gx = 0; gx < grid_w; ++gx)
            for (int s = 0; s < 4; ++s)
                y.row(out_row(gy, gx, s / 2, s % 2)) = x.row(static_cast<Eigen::Index>(gy) * grid_w + gx).segment(s * c, c);
    return make(std::move(y), {a}, [=](Node& n) {
        Matrix g(n.parents[0]->value.rows(), n.parents[0]->value.cols());
        for (int gy = 0; gy < grid_h; ++gy)
            for (int gx = 0; gx < grid_w; ++gx)
                for (int s = 0; s < 4; ++s)
                    g.row(static_cast<Eigen::Index>(gy) * grid_w + gx).segment(s * c, c) =
                        n.grad.row(out_row(gy, gx, s / 2, s % 2));
        n.parents[0]->accumulate(g);
    });
}

Var column_as_image(const Var& a, Eigen::Index j, int h, int w) {
    if (a.rows() != static_cast<Eigen::Index>(h) * w || j < 0 || j >= a.cols())
        throw ShapeError("column_as_image: " + shape(a.value()));
    Matrix img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img(y, x) = a.value()(static_cast<Eigen::Index>(y) * w + x, j);
    return make(std::move(img), {a}, [j, h, w](Node& n) {
        Node& p = *n.parents[0];
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) g(static_cast<Eigen::Index>(y) * w + x, j) = n.grad(y, x);
        p.accumulate(g);
    });
}

Var external_scalar(const Var& input, double value, Matrix grad) {
    if (grad.rows() != input.rows() || grad.cols() != input.cols())
        throw ShapeError("external_scalar: gradient shape " + shape(grad) + " vs input " + shape(input.value()));
    Matrix v(1, 1);
    v(0, 0) = value;
    return make(std::move(v), {input}, [g = std::move(grad)](Node& n) { n.parents[0]->accumulate(g * n.grad(0, 0)); });
}

void backward(const Var& root) {
    if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward expects a scalar root");
    if (!root.requires_grad()) return;

    // iterative post-order DFS for a topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !seen.contains(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() > 0) n->backward(*n);
    }
    // interior gradients are not needed after the pass
    for (Node* n : order)
        if (n->backward) n->grad.resize(0, 0);
}

}  // namespace octasam::ag
