#include "dc/autodiff.hpp"

#include <cmath>

#include "dc/error.hpp"
#include "dc/kinematics.hpp"

namespace dc::ad {

namespace {

Graph* common_graph(const std::vector<Ptr>& parents) {
    Graph* g = nullptr;
    for (const auto& p : parents) {
        if (!p) continue;
        if (!g) g = p->graph;
        if (p->graph != g) throw ShapeError("autodiff: nodes from different graphs");
    }
    if (!g) throw ShapeError("autodiff: op needs at least one node argument");
    return g;
}

bool any_grad(const std::vector<Ptr>& parents) {
    for (const auto& p : parents)
        if (p && p->requires_grad) return true;
    return false;
}

}  // namespace

Ptr Graph::leaf(Eigen::MatrixXd v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->grad = Eigen::MatrixXd::Zero(n->val.rows(), n->val.cols());
    n->requires_grad = requires_grad;
    n->graph = this;
    nodes_.push_back(n);
    return n;
}

Ptr Graph::track(Eigen::MatrixXd v, bool requires_grad, std::vector<Ptr> parents,
                 std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->grad = Eigen::MatrixXd::Zero(n->val.rows(), n->val.cols());
    n->requires_grad = requires_grad;
    n->graph = this;
    n->parents = std::move(parents);
    if (requires_grad) n->backprop = std::move(backprop);
    nodes_.push_back(n);
    return n;
}

void Graph::backward(const Ptr& root) {
    if (root->val.rows() != 1 || root->val.cols() != 1)
        throw ShapeError("backward: root must be 1x1");
    for (auto& n : nodes_) n->grad.setZero();
    root->grad(0, 0) = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (n.requires_grad && n.backprop) n.backprop(n);
    }
}

static Ptr make(std::vector<Ptr> parents, Eigen::MatrixXd v, std::function<void(Node&)> bp) {
    Graph* g = common_graph(parents);
    const bool needs_grad = any_grad(parents);
    return g->track(std::move(v), needs_grad, std::move(parents), std::move(bp));
}

Ptr add(const Ptr& a, const Ptr& b) {
    if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols())
        throw ShapeError("add: shape mismatch");
    return make({a, b}, a->val + b->val, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->grad += n.grad;
        if (n.parents[1]->requires_grad) n.parents[1]->grad += n.grad;
    });
}

Ptr sub(const Ptr& a, const Ptr& b) {
    if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols())
        throw ShapeError("sub: shape mismatch");
    return make({a, b}, a->val - b->val, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->grad += n.grad;
        if (n.parents[1]->requires_grad) n.parents[1]->grad -= n.grad;
    });
}

Ptr hadamard(const Ptr& a, const Ptr& b) {
    if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols())
        throw ShapeError("hadamard: shape mismatch");
    return make({a, b}, a->val.cwiseProduct(b->val), [](Node& n) {
        if (n.parents[0]->requires_grad)
            n.parents[0]->grad += n.grad.cwiseProduct(n.parents[1]->val);
        if (n.parents[1]->requires_grad)
            n.parents[1]->grad += n.grad.cwiseProduct(n.parents[0]->val);
    });
}

Ptr scale(const Ptr& a, double c) {
    return make({a}, c * a->val, [c](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->grad += c * n.grad;
    });
}

Ptr matmul(const Ptr& a, const Ptr& b) {
    if (a->val.cols() != b->val.rows()) throw ShapeError("matmul: inner dims differ");
    return make({a, b}, a->val * b->val, [](Node& n) {
        if (n.parents[0]->requires_grad)
            n.parents[0]->grad.noalias() += n.grad * n.parents[1]->val.transpose();
        if (n.parents[1]->requires_grad)
            n.parents[1]->grad.noalias() += n.parents[0]->val.transpose() * n.grad;
    });
}

Ptr transpose(const Ptr& a) {
    return make({a}, a->val.transpose(), [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->grad += n.grad.transpose();
    });
}

Ptr scalar_mul(const Ptr& x, const Ptr& s) {
    if (s->val.size() != 1) throw ShapeError("scalar_mul: scale must be 1x1");
    return make({x, s}, s->val(0, 0) * x->val, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->grad += n.parents[1]->val(0, 0) * n.grad;
        if (n.parents[1]->requires_grad)
            n.parents[1]->grad(0, 0) += n.grad.cwiseProduct(n.parents[0]->val).sum();
    });
}

Ptr add_rowvec(const Ptr& x, const Ptr& v) {
    if (v->val.rows() != 1 || v->val.cols() != x->val.cols())
        throw ShapeError("add_rowvec: v must be 1 x cols(x)");
    return make({x, v}, x->val.rowwise() + v->val.row(0), [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->grad += n.grad;
        if (n.parents[1]->requires_grad) n.parents[1]->grad += n.grad.colwise().sum();
    });
}

Ptr mul_rowvec(const Ptr& x, const Ptr& v) {
    if (v->val.rows() != 1 || v->val.cols() != x->val.cols())
        throw ShapeError("mul_rowvec: v must be 1 x cols(x)");
    Eigen::MatrixXd out = x->val.array().rowwise() * v->val.row(0).array();
    return make({x, v}, std::move(out), [](Node& n) {
        if (n.parents[0]->requires_grad)
            n.parents[0]->grad += (n.grad.array().rowwise() * n.parents[1]->val.row(0).array()).matrix();
        if (n.parents[1]->requires_grad)
            n.parents[1]->grad += n.grad.cwiseProduct(n.parents[0]->val).colwise().sum();
    });
}

Ptr cadd(const Ptr& a, const Eigen::MatrixXd& c) {
    Eigen::MatrixXd out;
    if (c.rows() == a->val.rows() && c.cols() == a->val.cols()) out = a->val + c;
    else if (c.rows() == 1 && c.cols() == a->val.cols()) out = a->val.rowwise() + c.row(0);
    else throw ShapeError("cadd: shape mismatch");
    return make({a}, std::move(out), [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->grad += n.grad;
    });
}

Ptr cmul(const Ptr& a, const Eigen::MatrixXd& c) {
    Eigen::MatrixXd out, cc;
    if (c.rows() == a->val.rows() && c.cols() == a->val.cols()) cc = c;
    else if (c.rows() == 1 && c.cols() == a->val.cols()) cc = c.replicate(a->val.rows(), 1);
    else throw ShapeError("cmul: shape mismatch");
    out = a->val.cwiseProduct(cc);
    return make({a}, std::move(out), [cc](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->grad += n.grad.cwiseProduct(cc);
    });
}

Ptr slice_cols(const Ptr& a, int start, int n) {
    if (start < 0 || start + n > a->val.cols()) throw ShapeError("slice_cols: out of range");
    return make({a}, a->val.middleCols(start, n), [start, n](Node& node) {
        if (node.parents[0]->requires_grad)
            node.parents[0]->grad.middleCols(start, n) += node.grad;
    });
}

Ptr concat_cols(const std::vector<Ptr>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty");
    long rows = parts[0]->val.rows(), cols = 0;
    for (const auto& p : parts) {
        if (p->val.rows() != rows) throw ShapeError("concat_cols: row mismatch");
        cols += p->val.cols();
    }
    Eigen::MatrixXd out(rows, cols);
    long off = 0;
    std::vector<long> offsets;
    for (const auto& p : parts) {
        offsets.push_back(off);
        out.middleCols(off, p->val.cols()) = p->val;
        off += p->val.cols();
    }
    return make(parts, std::move(out), [offsets](Node& n) {
        for (size_t i = 0; i < n.parents.size(); ++i) {
            auto& p = n.parents[i];
            if (p->requires_grad) p->grad += n.grad.middleCols(offsets[i], p->val.cols());
        }
    });
}

Ptr gelu(const Ptr& a) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    Eigen::MatrixXd out = a->val.unaryExpr(
        [&](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
    return make({a}, std::move(out), [=](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const auto& x = n.parents[0]->val;
        Eigen::MatrixXd d = x.unaryExpr([&](double v) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
        });
        n.parents[0]->grad += n.grad.cwiseProduct(d);
    });
}

Ptr softmax_rows(const Ptr& a) {
    Eigen::MatrixXd out = a->val;
    for (long r = 0; r < out.rows(); ++r) {
        Eigen::RowVectorXd row = out.row(r);
        const double m = row.maxCoeff();
        row = (row.array() - m).exp();
        out.row(r) = row / row.sum();
    }
    return make({a}, out, [out](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (long r = 0; r < out.rows(); ++r) {
            const Eigen::RowVectorXd s = out.row(r);
            const Eigen::RowVectorXd g = n.grad.row(r);
            const double dot = g.cwiseProduct(s).sum();
            n.parents[0]->grad.row(r) += (s.array() * (g.array() - dot)).matrix();
        }
    });
}

Ptr layernorm_rows(const Ptr& a, double eps) {
    const long T = a->val.rows(), d = a->val.cols();
    Eigen::MatrixXd out(T, d);
    Eigen::VectorXd inv_std(T);
    for (long r = 0; r < T; ++r) {
        const double mu = a->val.row(r).mean();
        const Eigen::RowVectorXd c = a->val.row(r).array() - mu;
        const double var = c.squaredNorm() / static_cast<double>(d);
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        out.row(r) = c * inv_std(r);
    }
    return make({a}, out, [out, inv_std, d](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (long r = 0; r < out.rows(); ++r) {
            const Eigen::RowVectorXd y = out.row(r);
            const Eigen::RowVectorXd g = n.grad.row(r);
            const double gmean = g.mean();
            const double gydot = g.cwiseProduct(y).sum() / static_cast<double>(d);
            n.parents[0]->grad.row(r) +=
                inv_std(r) * (g.array() - gmean - y.array() * gydot).matrix();
        }
    });
}

Ptr l2normalize_rows(const Ptr& a, double eps) {
    const long T = a->val.rows();
    Eigen::VectorXd norms(T);
    Eigen::MatrixXd out = a->val;
    for (long r = 0; r < T; ++r) {
        norms(r) = std::max(eps, a->val.row(r).norm());
        out.row(r) /= norms(r);
    }
    return make({a}, out, [out, norms](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (long r = 0; r < out.rows(); ++r) {
            const Eigen::RowVectorXd y = out.row(r);
            const Eigen::RowVectorXd g = n.grad.row(r);
            n.parents[0]->grad.row(r) += (g - y * y.dot(g)) / norms(r);
        }
    });
}

Ptr dropout(const Ptr& a, Rng& rng, double p) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw ConfigError("dropout: p must be < 1");
    const double keep = 1.0 - p;
    Eigen::MatrixXd mask(a->val.rows(), a->val.cols());
    for (long r = 0; r < mask.rows(); ++r)
        for (long c = 0; c < mask.cols(); ++c) mask(r, c) = rng.uniform() < p ? 0.0 : 1.0 / keep;
    return cmul(a, mask);
}

Ptr rope(const Ptr& x, int heads, double base, long pos_offset) {
    const long T = x->val.rows(), D = x->val.cols();
    if (heads <= 0 || D % heads != 0) throw ShapeError("rope: cols not divisible by heads");
    const long dh = D / heads;
    if (dh % 2 != 0) throw ShapeError("rope: head_dim must be even");
    // Precompute cos/sin tables, shared by forward and backward.
    Eigen::MatrixXd cs(T, dh / 2), sn(T, dh / 2);
    for (long t = 0; t < T; ++t)
        for (long i = 0; i < dh / 2; ++i) {
            const double theta = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(dh));
            const double ang = static_cast<double>(pos_offset + t) * theta;
            cs(t, i) = std::cos(ang);
            sn(t, i) = std::sin(ang);
        }
    auto rotate = [heads, dh, cs, sn](const Eigen::MatrixXd& in, bool inverse) {
        Eigen::MatrixXd out(in.rows(), in.cols());
        for (long t = 0; t < in.rows(); ++t)
            for (int h = 0; h < heads; ++h)
                for (long i = 0; i < dh / 2; ++i) {
                    const long c0 = h * dh + 2 * i, c1 = c0 + 1;
                    const double cv = cs(t, i), sv = inverse ? -sn(t, i) : sn(t, i);
                    out(t, c0) = cv * in(t, c0) - sv * in(t, c1);
                    out(t, c1) = sv * in(t, c0) + cv * in(t, c1);
                }
        return out;
    };
    return make({x}, rotate(x->val, false), [rotate](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->grad += rotate(n.grad, true);
    });
}

Ptr gather_rows(const Ptr& table, const std::vector<int>& ids) {
    Eigen::MatrixXd out(static_cast<long>(ids.size()), table->val.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table->val.rows()) throw RangeError("gather_rows: id out of range");
        out.row(static_cast<long>(i)) = table->val.row(ids[i]);
    }
    return make({table}, std::move(out), [ids](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (size_t i = 0; i < ids.size(); ++i)
            n.parents[0]->grad.row(ids[i]) += n.grad.row(static_cast<long>(i));
    });
}

Ptr sum_all(const Ptr& a) {
    return make({a}, Eigen::MatrixXd::Constant(1, 1, a->val.sum()), [](Node& n) {
        if (n.parents[0]->requires_grad)
            n.parents[0]->grad.array() += n.grad(0, 0);
    });
}

Ptr mean_all(const Ptr& a) {
    const double inv = 1.0 / static_cast<double>(a->val.size());
    return make({a}, Eigen::MatrixXd::Constant(1, 1, a->val.mean()), [inv](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->grad.array() += inv * n.grad(0, 0);
    });
}

Ptr mse(const Ptr& a, const Ptr& b) {
    if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols())
        throw ShapeError("mse: shape mismatch");
    const Eigen::MatrixXd diff = a->val - b->val;
    const double inv = 1.0 / static_cast<double>(diff.size());
    const double v = diff.array().square().sum() * inv;
    return make({a, b}, Eigen::MatrixXd::Constant(1, 1, v), [diff, inv](Node& n) {
        const Eigen::MatrixXd g = (2.0 * inv * n.grad(0, 0)) * diff;
        if (n.parents[0]->requires_grad) n.parents[0]->grad += g;
        if (n.parents[1]->requires_grad) n.parents[1]->grad -= g;
    });
}

Ptr mse_cols(const Ptr& a, const Ptr& b, const std::vector<int>& cols) {
    if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols())
        throw ShapeError("mse_cols: shape mismatch");
    if (cols.empty()) throw LayoutError("mse_cols: empty column set");
    const long T = a->val.rows();
    double acc = 0.0;
    for (int c : cols) {
        if (c < 0 || c >= a->val.cols()) throw LayoutError("mse_cols: column out of range");
        acc += (a->val.col(c) - b->val.col(c)).squaredNorm();
    }
    const double inv = 1.0 / (static_cast<double>(T) * static_cast<double>(cols.size()));
    return make({a, b}, Eigen::MatrixXd::Constant(1, 1, acc * inv), [cols, inv](Node& n) {
        const double s = 2.0 * inv * n.grad(0, 0);
        for (int c : cols) {
            const Eigen::VectorXd d = n.parents[0]->val.col(c) - n.parents[1]->val.col(c);
            if (n.parents[0]->requires_grad) n.parents[0]->grad.col(c) += s * d;
            if (n.parents[1]->requires_grad) n.parents[1]->grad.col(c) -= s * d;
        }
    });
}

Ptr diff_rows(const Ptr& a) {
    const long T = a->val.rows();
    if (T < 2) throw ShapeError("diff_rows: need at least 2 rows");
    Eigen::MatrixXd out = a->val.bottomRows(T - 1) - a->val.topRows(T - 1);
    return make({a}, std::move(out), [T](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        n.parents[0]->grad.bottomRows(T - 1) += n.grad;
        n.parents[0]->grad.topRows(T - 1) -= n.grad;
    });
}

Ptr fk_positions(const Ptr& x, const schema::SkeletonSchema& sch, bool native) {
    const long T = x->val.rows();
    const int expect = native ? sch.native_pose_dim() : sch.continuous_dim();
    if (x->val.cols() != expect) throw ShapeError("fk_positions: bad input width");
    const int J = static_cast<int>(sch.joints().size());
    auto caches = std::make_shared<std::vector<kin::FrameFk>>(static_cast<size_t>(T));
    Eigen::MatrixXd out(T, 3 * J);
    for (long t = 0; t < T; ++t) {
        out.row(t) = native ? kin::fk_frame_native(x->val.row(t), sch, &(*caches)[t])
                            : kin::fk_frame_continuous(x->val.row(t), sch, &(*caches)[t]);
    }
    return make({x}, std::move(out), [caches, &sch, native](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        for (long t = 0; t < n.val.rows(); ++t) {
            const Eigen::RowVectorXd row = n.parents[0]->val.row(t);
            n.parents[0]->grad.row(t) +=
                native ? kin::fk_frame_native_vjp(row, sch, (*caches)[t], n.grad.row(t))
                       : kin::fk_frame_continuous_vjp(row, sch, (*caches)[t], n.grad.row(t));
        }
    });
}

}  // namespace dc::ad
