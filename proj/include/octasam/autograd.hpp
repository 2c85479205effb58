#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace octasam::ag {

using Matrix = Eigen::MatrixXd;

/// Graph node. Leaves with requires_grad accumulate gradients across backward passes until
/// zeroed; interior nodes keep their parents only when some ancestor requires a gradient.
struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Matrix& g);
};

/// Handle to a node: a 2-D matrix value in a reverse-mode graph. Rows are tokens/pixels.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    void zero_grad() { node_->grad.resize(0, 0); }
    bool defined() const { return static_cast<bool>(node_); }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Disables graph construction on this thread for its lifetime (inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

Var constant(Matrix value);
Var leaf(Matrix value, bool requires_grad);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// a + row, with `row` (1 x n) broadcast over the rows of a.
Var add_row(const Var& a, const Var& row);
/// a * row elementwise, broadcast over rows.
Var mul_row(const Var& a, const Var& row);
Var transpose(const Var& a);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Per-row standardisation (no affine part).
Var normalize_rows(const Var& a, double eps = 1e-6);
Var gelu(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softmax_rows(const Var& a);
Var sum(const Var& a);
/// Token grid (h*w rows, 4*c cols laid out as (dy, dx, c)) to a (2h*2w) x c grid.
Var pixel_shuffle(const Var& a, int grid_h, int grid_w);
/// Column j of a (h*w) x m matrix, row-major pixels, as an h x w matrix.
Var column_as_image(const Var& a, Eigen::Index j, int h, int w);
/// Scalar node whose value and gradient w.r.t. `input` were computed elsewhere.
Var external_scalar(const Var& input, double value, Matrix grad);

/// Runs reverse accumulation from a 1x1 root.
void backward(const Var& root);

}  // namespace octasam::ag
