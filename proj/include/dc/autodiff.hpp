#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <vector>

#include "dc/rng.hpp"
#include "dc/schema.hpp"

namespace dc::ad {

class Graph;

// One tape entry. Values and gradients are dense row-major-ish Eigen
// matrices; sequences are rows, features are columns.
struct Node {
    Eigen::MatrixXd val;
    Eigen::MatrixXd grad;  // same shape as val, zero-initialized
    bool requires_grad = false;
    Graph* graph = nullptr;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // pushes this->grad into parents

    double scalar() const { return val(0, 0); }
};

using Ptr = std::shared_ptr<Node>;

// Tape in creation order; creation order is a valid topological order.
class Graph {
public:
    Ptr leaf(Eigen::MatrixXd v, bool requires_grad);
    Ptr constant(Eigen::MatrixXd v) { return leaf(std::move(v), false); }
    Ptr scalar(double v) { return constant(Eigen::MatrixXd::Constant(1, 1, v)); }

    Ptr track(Eigen::MatrixXd v, bool requires_grad, std::vector<Ptr> parents,
              std::function<void(Node&)> backprop);

    // Reverse sweep from a 1x1 root.
    void backward(const Ptr& root);

    size_t size() const { return nodes_.size(); }

private:
    std::vector<Ptr> nodes_;
};

// --- elementwise / linear ---
Ptr add(const Ptr& a, const Ptr& b);
Ptr sub(const Ptr& a, const Ptr& b);
Ptr hadamard(const Ptr& a, const Ptr& b);
Ptr scale(const Ptr& a, double c);
Ptr matmul(const Ptr& a, const Ptr& b);
Ptr transpose(const Ptr& a);
Ptr scalar_mul(const Ptr& x, const Ptr& s);  // s is 1x1

// broadcast a 1xd row over every row of x
Ptr add_rowvec(const Ptr& x, const Ptr& v);
Ptr mul_rowvec(const Ptr& x, const Ptr& v);

// constants folded without tape entries for the constant side
Ptr cadd(const Ptr& a, const Eigen::MatrixXd& c);
Ptr cmul(const Ptr& a, const Eigen::MatrixXd& c);  // elementwise, c broadcast per-row if 1xd

Ptr slice_cols(const Ptr& a, int start, int n);
Ptr concat_cols(const std::vector<Ptr>& parts);

// --- nonlinearities ---
Ptr gelu(const Ptr& a);
Ptr softmax_rows(const Ptr& a);
Ptr layernorm_rows(const Ptr& a, double eps = 1e-6);
Ptr l2normalize_rows(const Ptr& a, double eps = 1e-12);
Ptr dropout(const Ptr& a, Rng& rng, double p);  // inverted dropout; p = 0 is identity

// rotary embedding over heads: x is T x (heads*head_dim); pair (2i, 2i+1)
// inside each head rotated by angle (pos_offset + row) * base^(-2i/head_dim)
Ptr rope(const Ptr& x, int heads, double base = 10000.0, long pos_offset = 0);

Ptr gather_rows(const Ptr& table, const std::vector<int>& ids);

// --- reductions ---
Ptr sum_all(const Ptr& a);
Ptr mean_all(const Ptr& a);
Ptr mse(const Ptr& a, const Ptr& b);
// mean squared error restricted to a column index set
Ptr mse_cols(const Ptr& a, const Ptr& b, const std::vector<int>& cols);
// first-order difference over rows: (T-1) x d
Ptr diff_rows(const Ptr& a);

// differentiable pose -> world joint positions (T x 3J); rows of x are
// unnormalized continuous coordinates or native coordinates per `native`.
Ptr fk_positions(const Ptr& x, const schema::SkeletonSchema& sch, bool native = false);

}  // namespace dc::ad
