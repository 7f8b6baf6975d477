#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <vector>

#include "dc/autodiff.hpp"
#include "dc/error.hpp"
#include "dc/kinematics.hpp"
#include "dc/repr.hpp"
#include "dc/rng.hpp"
#include "dc/schema.hpp"

using namespace dc;
using ad::Graph;
using ad::Ptr;

namespace {

// Builds a 1x1 root from leaf nodes; must be deterministic across calls so
// central differences see the same function.
using Builder = std::function<Ptr(Graph&, const std::vector<Ptr>&)>;

Eigen::MatrixXd random_mat(Rng& rng, long r, long c, double s = 1.0) {
    Eigen::MatrixXd m(r, c);
    for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j) m(i, j) = s * rng.normal();
    return m;
}

double eval_scalar(const Builder& build, const std::vector<Eigen::MatrixXd>& vals) {
    Graph g;
    std::vector<Ptr> leaves;
    leaves.reserve(vals.size());
    for (const auto& v : vals) leaves.push_back(g.leaf(v, true));
    return build(g, leaves)->scalar();
}

// Checks the analytic gradient of every input entry against a central
// finite difference of the scalar output.
void fd_check(const Builder& build, std::vector<Eigen::MatrixXd> vals, double tol = 1e-6,
              double eps = 1e-5) {
    Graph g;
    std::vector<Ptr> leaves;
    leaves.reserve(vals.size());
    for (const auto& v : vals) leaves.push_back(g.leaf(v, true));
    Ptr root = build(g, leaves);
    REQUIRE(root->val.rows() == 1);
    REQUIRE(root->val.cols() == 1);
    g.backward(root);

    for (size_t i = 0; i < vals.size(); ++i) {
        for (long r = 0; r < vals[i].rows(); ++r) {
            for (long c = 0; c < vals[i].cols(); ++c) {
                const double save = vals[i](r, c);
                vals[i](r, c) = save + eps;
                const double fp = eval_scalar(build, vals);
                vals[i](r, c) = save - eps;
                const double fm = eval_scalar(build, vals);
                vals[i](r, c) = save;
                const double fd = (fp - fm) / (2.0 * eps);
                const double an = leaves[i]->grad(r, c);
                const double denom = std::max(1.0, std::max(std::abs(fd), std::abs(an)));
                CHECK(std::abs(fd - an) / denom < tol);
            }
        }
    }
}

// Projects an arbitrary-shape node to 1x1 with a fixed random direction so
// gradients are exercised along non-trivial cotangents.
Ptr project(Graph& g, const Ptr& x, uint64_t seed = 99) {
    Rng rng(seed);
    Eigen::MatrixXd w = random_mat(rng, x->val.rows(), x->val.cols());
    return ad::sum_all(ad::hadamard(x, g.constant(w)));
}

}  // namespace

TEST_CASE("requires_grad propagates through ops") {
    Graph g;
    auto c = g.constant(Eigen::MatrixXd::Ones(3, 3));
    auto w = g.leaf(Eigen::MatrixXd::Ones(3, 3), true);
    CHECK(ad::matmul(c, w)->requires_grad);
    CHECK(ad::matmul(w, c)->requires_grad);
    CHECK(ad::add(c, w)->requires_grad);
    CHECK_FALSE(ad::matmul(c, c)->requires_grad);
    CHECK(ad::sum_all(ad::gelu(w))->requires_grad);

    // A constant-only subtree must not receive gradient.
    auto root = ad::sum_all(ad::hadamard(w, c));
    g.backward(root);
    CHECK(w->grad.isApprox(Eigen::MatrixXd::Ones(3, 3)));
    CHECK(c->grad.norm() == 0.0);
}

TEST_CASE("elementwise and linear op gradients match finite differences") {
    Rng rng(11);
    const Eigen::MatrixXd A = random_mat(rng, 3, 4);
    const Eigen::MatrixXd B = random_mat(rng, 3, 4);
    const Eigen::MatrixXd W = random_mat(rng, 4, 2);
    const Eigen::MatrixXd V = random_mat(rng, 1, 4);

    fd_check([](Graph& g, const std::vector<Ptr>& in) { return project(g, ad::add(in[0], in[1])); },
             {A, B});
    fd_check([](Graph& g, const std::vector<Ptr>& in) { return project(g, ad::sub(in[0], in[1])); },
             {A, B});
    fd_check(
        [](Graph& g, const std::vector<Ptr>& in) { return project(g, ad::hadamard(in[0], in[1])); },
        {A, B});
    fd_check(
        [](Graph& g, const std::vector<Ptr>& in) { return project(g, ad::scale(in[0], -2.5)); },
        {A});
    fd_check(
        [](Graph& g, const std::vector<Ptr>& in) { return project(g, ad::matmul(in[0], in[1])); },
        {A, W});
    fd_check(
        [](Graph& g, const std::vector<Ptr>& in) { return project(g, ad::transpose(in[0])); },
        {A});
    fd_check(
        [](Graph& g, const std::vector<Ptr>& in) {
            return project(g, ad::scalar_mul(in[0], in[1]));
        },
        {A, Eigen::MatrixXd::Constant(1, 1, 0.7)});
    fd_check(
        [](Graph& g, const std::vector<Ptr>& in) {
            return project(g, ad::add_rowvec(in[0], in[1]));
        },
        {A, V});
    fd_check(
        [](Graph& g, const std::vector<Ptr>& in) {
            return project(g, ad::mul_rowvec(in[0], in[1]));
        },
        {A, V});
}

TEST_CASE("constant-folded ops: values and gradients") {
    Rng rng(12);
    const Eigen::MatrixXd A = random_mat(rng, 3, 4);
    const Eigen::MatrixXd C = random_mat(rng, 3, 4);
    const Eigen::MatrixXd Crow = random_mat(rng, 1, 4);

    {
        Graph g;
        auto a = g.leaf(A, true);
        CHECK(ad::cadd(a, C)->val.isApprox(A + C));
        CHECK(ad::cmul(a, C)->val.isApprox(A.cwiseProduct(C)));
        Eigen::MatrixXd broad = A.array().rowwise() * Crow.row(0).array();
        CHECK(ad::cmul(a, Crow)->val.isApprox(broad));
    }
    fd_check(
        [&C](Graph& g, const std::vector<Ptr>& in) { return project(g, ad::cadd(in[0], C)); },
        {A});
    fd_check(
        [&C](Graph& g, const std::vector<Ptr>& in) { return project(g, ad::cmul(in[0], C)); },
        {A});
    fd_check(
        [&Crow](Graph& g, const std::vector<Ptr>& in) { return project(g, ad::cmul(in[0], Crow)); },
        {A});
}

TEST_CASE("slice and concat gradients") {
    Rng rng(13);
    const Eigen::MatrixXd A = random_mat(rng, 3, 6);
    const Eigen::MatrixXd B = random_mat(rng, 3, 2);

    {
        Graph g;
        auto a = g.leaf(A, true);
        CHECK(ad::slice_cols(a, 2, 3)->val.isApprox(A.middleCols(2, 3)));
        CHECK_THROWS_AS(ad::slice_cols(a, 5, 3), ShapeError);
        auto cat = ad::concat_cols({a, g.leaf(B, true)});
        CHECK(cat->val.leftCols(6).isApprox(A));
        CHECK(cat->val.rightCols(2).isApprox(B));
    }
    fd_check(
        [](Graph& g, const std::vector<Ptr>& in) { return project(g, ad::slice_cols(in[0], 1, 4)); },
        {A});
    fd_check(
        [](Graph& g, const std::vector<Ptr>& in) {
            return project(g, ad::concat_cols({in[0], in[1]}));
        },
        {A, B});
}

TEST_CASE("gelu matches erf formula and finite differences") {
    Graph g;
    Eigen::MatrixXd x(1, 3);
    x << 0.0, 1.0, -2.0;
    auto y = ad::gelu(g.leaf(x, true));
    for (int j = 0; j < 3; ++j) {
        const double v = x(0, j);
        const double want = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
        CHECK(y->val(0, j) == doctest::Approx(want).epsilon(1e-12));
    }
    CHECK(y->val(0, 0) == 0.0);

    Rng rng(14);
    fd_check([](Graph& gg, const std::vector<Ptr>& in) { return project(gg, ad::gelu(in[0])); },
             {random_mat(rng, 3, 5)});
}

TEST_CASE("softmax rows: oracle values and gradients") {
    Rng rng(15);
    const Eigen::MatrixXd A = random_mat(rng, 4, 5, 2.0);
    Graph g;
    auto y = ad::softmax_rows(g.leaf(A, true));
    for (long r = 0; r < 4; ++r) {
        const double mx = A.row(r).maxCoeff();
        Eigen::ArrayXd e = (A.row(r).array() - mx).exp();
        Eigen::ArrayXd want = e / e.sum();
        CHECK((y->val.row(r).transpose().array() - want).abs().maxCoeff() < 1e-14);
        CHECK(y->val.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    // shift invariance
    {
        Graph g2;
        auto y2 = ad::softmax_rows(g2.constant(A.array() + 100.0));
        CHECK((y2->val - y->val).norm() < 1e-12);
    }
    fd_check(
        [](Graph& gg, const std::vector<Ptr>& in) { return project(gg, ad::softmax_rows(in[0])); },
        {A});
}

TEST_CASE("layernorm rows: oracle values and gradients") {
    Rng rng(16);
    const Eigen::MatrixXd A = random_mat(rng, 3, 7);
    Graph g;
    auto y = ad::layernorm_rows(g.leaf(A, true));
    for (long r = 0; r < 3; ++r) {
        const double mean = A.row(r).mean();
        const double var = (A.row(r).array() - mean).square().mean();
        Eigen::ArrayXd want = (A.row(r).array() - mean) / std::sqrt(var + 1e-6);
        CHECK((y->val.row(r).transpose().array() - want).abs().maxCoeff() < 1e-12);
        CHECK(std::abs(y->val.row(r).mean()) < 1e-12);
    }
    fd_check(
        [](Graph& gg, const std::vector<Ptr>& in) {
            return project(gg, ad::layernorm_rows(in[0]));
        },
        {A}, 1e-5);
}

TEST_CASE("l2 normalize rows: unit norms and gradients") {
    Rng rng(17);
    const Eigen::MatrixXd A = random_mat(rng, 4, 6);
    Graph g;
    auto y = ad::l2normalize_rows(g.leaf(A, true));
    for (long r = 0; r < 4; ++r) CHECK(y->val.row(r).norm() == doctest::Approx(1.0).epsilon(1e-10));
    fd_check(
        [](Graph& gg, const std::vector<Ptr>& in) {
            return project(gg, ad::l2normalize_rows(in[0]));
        },
        {A}, 1e-5);
}

TEST_CASE("dropout: identity at p=0, inverted scaling, deterministic gradients") {
    Rng rng(18);
    const Eigen::MatrixXd A = random_mat(rng, 6, 8);
    {
        Graph g;
        auto a = g.leaf(A, true);
        Rng r2(5);
        auto y = ad::dropout(a, r2, 0.0);
        CHECK(y->val.isApprox(A));
    }
    {
        Graph g;
        auto a = g.leaf(A, true);
        Rng r2(5);
        auto y = ad::dropout(a, r2, 0.5);
        // surviving entries are scaled by 1/(1-p); dropped entries are zero
        for (long i = 0; i < A.rows(); ++i)
            for (long j = 0; j < A.cols(); ++j) {
                const double v = y->val(i, j);
                CHECK((v == 0.0 || v == doctest::Approx(2.0 * A(i, j)).epsilon(1e-12)));
            }
    }
    // FD with the mask re-seeded identically every evaluation
    fd_check(
        [](Graph& gg, const std::vector<Ptr>& in) {
            Rng r2(77);
            return project(gg, ad::dropout(in[0], r2, 0.3));
        },
        {A});
}

TEST_CASE("rope: norm preservation, relative-position property, gradients") {
    Rng rng(19);
    const int heads = 2, dh = 4;
    const Eigen::MatrixXd A = random_mat(rng, 5, heads * dh);
    Graph g;
    auto y = ad::rope(g.leaf(A, true), heads);
    CHECK(y->val.rows() == 5);
    // per-pair rotation preserves the 2-norm of every (2i, 2i+1) pair
    for (long r = 0; r < 5; ++r)
        for (int h = 0; h < heads; ++h)
            for (int i = 0; i < dh / 2; ++i) {
                const int c = h * dh + 2 * i;
                const double n0 = std::hypot(A(r, c), A(r, c + 1));
                const double n1 = std::hypot(y->val(r, c), y->val(r, c + 1));
                CHECK(n1 == doctest::Approx(n0).epsilon(1e-12));
            }
    // row 0 with pos_offset 0 is untouched
    CHECK((y->val.row(0) - A.row(0)).norm() < 1e-14);

    // relative property: dot(rope(q)_m, rope(k)_n) depends only on m - n.
    const Eigen::MatrixXd q = random_mat(rng, 1, dh), k = random_mat(rng, 1, dh);
    auto dot_at = [&](long m, long n) {
        Graph gg;
        Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(1, dh), K = Eigen::MatrixXd::Zero(1, dh);
        Q.row(0) = q.row(0);
        K.row(0) = k.row(0);
        auto rq = ad::rope(gg.constant(Q), 1, 10000.0, m);
        auto rk = ad::rope(gg.constant(K), 1, 10000.0, n);
        return (rq->val.row(0) * rk->val.row(0).transpose())(0, 0);
    };
    CHECK(dot_at(3, 1) == doctest::Approx(dot_at(7, 5)).epsilon(1e-10));
    CHECK(dot_at(4, 4) == doctest::Approx(dot_at(0, 0)).epsilon(1e-10));

    fd_check(
        [heads](Graph& gg, const std::vector<Ptr>& in) {
            return project(gg, ad::rope(in[0], heads));
        },
        {A});
}

TEST_CASE("gather rows: values, repeated ids accumulate gradient") {
    Rng rng(20);
    const Eigen::MatrixXd T = random_mat(rng, 5, 3);
    Graph g;
    auto tab = g.leaf(T, true);
    auto y = ad::gather_rows(tab, {4, 0, 4});
    CHECK(y->val.row(0).isApprox(T.row(4)));
    CHECK(y->val.row(1).isApprox(T.row(0)));
    CHECK(y->val.row(2).isApprox(T.row(4)));
    CHECK_THROWS_AS(ad::gather_rows(tab, {5}), RangeError);
    CHECK_THROWS_AS(ad::gather_rows(tab, {-1}), RangeError);

    fd_check(
        [](Graph& gg, const std::vector<Ptr>& in) {
            return project(gg, ad::gather_rows(in[0], {4, 0, 4}));
        },
        {T});
}

TEST_CASE("reductions: values and gradients") {
    Rng rng(21);
    const Eigen::MatrixXd A = random_mat(rng, 3, 4);
    const Eigen::MatrixXd B = random_mat(rng, 3, 4);
    {
        Graph g;
        auto a = g.leaf(A, true), b = g.leaf(B, true);
        CHECK(ad::sum_all(a)->scalar() == doctest::Approx(A.sum()).epsilon(1e-12));
        CHECK(ad::mean_all(a)->scalar() == doctest::Approx(A.mean()).epsilon(1e-12));
        CHECK(ad::mse(a, b)->scalar() ==
              doctest::Approx((A - B).array().square().mean()).epsilon(1e-12));
        const std::vector<int> cols{1, 3};
        double want = 0.0;
        for (int c : cols) want += (A.col(c) - B.col(c)).array().square().sum();
        want /= static_cast<double>(cols.size() * A.rows());
        CHECK(ad::mse_cols(a, b, cols)->scalar() == doctest::Approx(want).epsilon(1e-12));
    }
    fd_check([](Graph& g, const std::vector<Ptr>& in) { return ad::sum_all(in[0]); }, {A});
    fd_check([](Graph& g, const std::vector<Ptr>& in) { return ad::mean_all(in[0]); }, {A});
    fd_check([](Graph& g, const std::vector<Ptr>& in) { return ad::mse(in[0], in[1]); }, {A, B});
    fd_check(
        [](Graph& g, const std::vector<Ptr>& in) { return ad::mse_cols(in[0], in[1], {0, 2}); },
        {A, B});
}

TEST_CASE("diff rows: values and gradients") {
    Rng rng(22);
    const Eigen::MatrixXd A = random_mat(rng, 4, 3);
    Graph g;
    auto y = ad::diff_rows(g.leaf(A, true));
    CHECK(y->val.rows() == 3);
    for (long r = 0; r < 3; ++r) CHECK(y->val.row(r).isApprox(A.row(r + 1) - A.row(r)));
    fd_check([](Graph& gg, const std::vector<Ptr>& in) { return project(gg, ad::diff_rows(in[0])); },
             {A});
}

TEST_CASE("fk positions: forward matches kinematics, gradients match FD") {
    const auto two = schema::minimal_two_joint();
    Rng rng(23);

    // native coordinates on the 2-joint chain
    Eigen::MatrixXd native = random_mat(rng, 3, two.native_pose_dim(), 0.4);
    {
        Graph g;
        auto y = ad::fk_positions(g.leaf(native, true), two, true);
        repr::MotionSequence seq;
        seq.frames = native;
        const Eigen::MatrixXd want = kin::forward_kinematics(seq, two).positions;
        CHECK((y->val - want).norm() < 1e-12);
    }
    fd_check(
        [&two](Graph& g, const std::vector<Ptr>& in) {
            return project(g, ad::fk_positions(in[0], two, true));
        },
        {native}, 1e-5);

    // continuous (sin-cos / 6-D) coordinates on the 2-joint chain
    repr::MotionSequence seq2;
    seq2.frames = random_mat(rng, 2, two.native_pose_dim(), 0.4);
    Eigen::MatrixXd cont = repr::encode_sequence(seq2, two).frames;
    // move off the manifold slightly so the projection path is exercised too
    cont.array() += 0.01;
    fd_check(
        [&two](Graph& g, const std::vector<Ptr>& in) {
            return project(g, ad::fk_positions(in[0], two, false));
        },
        {cont}, 1e-4);

    // a short mhr260 clip in native coordinates
    const auto& big = schema::mhr260();
    Eigen::MatrixXd bn = random_mat(rng, 1, big.native_pose_dim(), 0.3);
    fd_check(
        [&big](Graph& g, const std::vector<Ptr>& in) {
            return project(g, ad::fk_positions(in[0], big, true));
        },
        {bn}, 1e-4);
}

TEST_CASE("backward clears stale gradients between sweeps") {
    Graph g;
    auto w = g.leaf(Eigen::MatrixXd::Ones(2, 2), true);
    auto root = ad::sum_all(w);
    g.backward(root);
    g.backward(root);
    CHECK(w->grad.isApprox(Eigen::MatrixXd::Ones(2, 2)));  // not doubled
}

TEST_CASE("shape errors") {
    Graph g;
    auto a = g.leaf(Eigen::MatrixXd::Zero(2, 3), true);
    auto b = g.leaf(Eigen::MatrixXd::Zero(3, 2), true);
    CHECK_THROWS_AS(ad::add(a, b), ShapeError);
    CHECK_THROWS_AS(ad::hadamard(a, b), ShapeError);
    CHECK_THROWS_AS(ad::matmul(a, a), ShapeError);
    CHECK_THROWS_AS(g.backward(a), ShapeError);
}
