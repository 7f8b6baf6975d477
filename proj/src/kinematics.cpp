#include "dc/kinematics.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "dc/error.hpp"
#include "dc/rng.hpp"

namespace dc::kin {

using repr::MotionSequence;
using schema::Axis;
using schema::JointGroup;
using schema::SkeletonSchema;

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& a) {
    Eigen::Matrix3d K;
    K << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
    return K;
}

// d/dtheta of the elementary rotation about `axis` at angle theta.
Eigen::Matrix3d elementary_rotation_deriv(Axis axis, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    Eigen::Matrix3d D = Eigen::Matrix3d::Zero();
    const int i = static_cast<int>(axis);
    const int u = (i + 1) % 3, w = (i + 2) % 3;
    D(u, u) = -s;
    D(w, w) = -s;
    D(w, u) = c;
    D(u, w) = -c;
    return D;
}

std::vector<Eigen::Matrix3d> native_row_rotations(const Eigen::RowVectorXd& row,
                                                  const SkeletonSchema& sch) {
    std::vector<Eigen::Matrix3d> R(sch.joints().size());
    for (size_t j = 0; j < sch.joints().size(); ++j) {
        const auto& js = sch.joints()[j];
        const int no = sch.native_offset(static_cast<int>(j));
        if (js.dof == 3) {
            R[j] = repr::euler_to_matrix(row.segment<3>(no).transpose(), js.order);
        } else {
            R[j] = repr::axis_angle_to_matrix(js.axis, row(no));
        }
    }
    return R;
}

}  // namespace

FrameFk fk_frame(const Eigen::Vector3d& root_translation,
                 const std::vector<Eigen::Matrix3d>& local_rotations, const SkeletonSchema& sch) {
    const size_t n = sch.joints().size();
    if (local_rotations.size() != n) throw ShapeError("fk_frame: rotation count mismatch");
    FrameFk fk;
    fk.local = local_rotations;
    fk.world.resize(n);
    fk.pos.resize(n);
    for (int j : sch.topological_order()) {
        const auto& js = sch.joints()[j];
        if (js.parent < 0) {
            fk.world[j] = fk.local[j];
            fk.pos[j] = root_translation;
        } else {
            fk.world[j] = fk.world[js.parent] * fk.local[j];
            fk.pos[j] = fk.pos[js.parent] + fk.world[js.parent] * js.offset;
        }
    }
    return fk;
}

void fk_frame_vjp(const FrameFk& fk, const SkeletonSchema& sch,
                  const std::vector<Eigen::Vector3d>& grad_pos,
                  std::vector<Eigen::Matrix3d>* grad_local, Eigen::Vector3d* grad_root) {
    const size_t n = sch.joints().size();
    std::vector<Eigen::Vector3d> gp = grad_pos;
    std::vector<Eigen::Matrix3d> gW(n, Eigen::Matrix3d::Zero());
    grad_local->assign(n, Eigen::Matrix3d::Zero());
    const auto& topo = sch.topological_order();
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        const int j = *it;
        const auto& js = sch.joints()[j];
        if (js.parent < 0) {
            (*grad_local)[j] = gW[j];
            *grad_root = gp[j];
        } else {
            gp[js.parent] += gp[j];
            gW[js.parent] += gp[j] * js.offset.transpose();
            gW[js.parent] += gW[j] * fk.local[j].transpose();
            (*grad_local)[j] = fk.world[js.parent].transpose() * gW[j];
        }
    }
}

JointPositions forward_kinematics(const MotionSequence& m, const SkeletonSchema& sch) {
    if (m.frames.cols() != sch.native_pose_dim())
        throw DimensionError("forward_kinematics: frame width mismatch");
    const long T = m.frames.rows();
    const int J = static_cast<int>(sch.joints().size());
    JointPositions out;
    out.schema_id = m.schema_id;
    out.fps = m.fps;
    out.positions.resize(T, 3 * J);
    for (long t = 0; t < T; ++t)
        out.positions.row(t) = fk_frame_native(m.frames.row(t), sch);
    return out;
}

Eigen::RowVectorXd fk_frame_native(const Eigen::RowVectorXd& native_row, const SkeletonSchema& sch,
                                   FrameFk* cache) {
    if (native_row.size() != sch.native_pose_dim())
        throw DimensionError("fk_frame_native: bad row width");
    const auto R = native_row_rotations(native_row, sch);
    FrameFk fk = fk_frame(native_row.head<3>().transpose(), R, sch);
    const int J = static_cast<int>(sch.joints().size());
    Eigen::RowVectorXd out(3 * J);
    for (int j = 0; j < J; ++j) out.segment<3>(3 * j) = fk.pos[j].transpose();
    if (cache) *cache = std::move(fk);
    return out;
}

Eigen::RowVectorXd fk_frame_native_vjp(const Eigen::RowVectorXd& native_row,
                                       const SkeletonSchema& sch, const FrameFk& cache,
                                       const Eigen::RowVectorXd& grad_positions) {
    const int J = static_cast<int>(sch.joints().size());
    std::vector<Eigen::Vector3d> gp(J);
    for (int j = 0; j < J; ++j) gp[j] = grad_positions.segment<3>(3 * j).transpose();
    std::vector<Eigen::Matrix3d> gR;
    Eigen::Vector3d groot;
    fk_frame_vjp(cache, sch, gp, &gR, &groot);

    Eigen::RowVectorXd grad = Eigen::RowVectorXd::Zero(sch.native_pose_dim());
    grad.head<3>() = groot.transpose();
    for (int j = 0; j < J; ++j) {
        const auto& js = sch.joints()[j];
        const int no = sch.native_offset(j);
        if (js.dof == 3) {
            const Eigen::Vector3d ang = native_row.segment<3>(no).transpose();
            Eigen::Matrix3d F[3];
            for (int a = 0; a < 3; ++a) F[a] = repr::elementary_rotation(js.order.axes[a], ang[a]);
            for (int a = 0; a < 3; ++a) {
                Eigen::Matrix3d D = (a == 0) ? elementary_rotation_deriv(js.order.axes[0], ang[0])
                                             : F[0];
                D = (a == 1) ? D * elementary_rotation_deriv(js.order.axes[1], ang[1]) : D * F[1];
                D = (a == 2) ? D * elementary_rotation_deriv(js.order.axes[2], ang[2]) : D * F[2];
                grad(no + a) = (gR[j].array() * D.array()).sum();
            }
        } else {
            const double th = native_row(no);
            const Eigen::Matrix3d K = skew(js.axis);
            const Eigen::Matrix3d D = std::cos(th) * K + std::sin(th) * (K * K);
            grad(no) = (gR[j].array() * D.array()).sum();
        }
    }
    return grad;
}

Eigen::RowVectorXd fk_frame_continuous(const Eigen::RowVectorXd& cont_row,
                                       const SkeletonSchema& sch, FrameFk* cache) {
    const auto R = repr::frame_rotations(cont_row, sch);
    FrameFk fk = fk_frame(cont_row.head<3>().transpose(), R, sch);
    const int J = static_cast<int>(sch.joints().size());
    Eigen::RowVectorXd out(3 * J);
    for (int j = 0; j < J; ++j) out.segment<3>(3 * j) = fk.pos[j].transpose();
    if (cache) *cache = std::move(fk);
    return out;
}

Eigen::RowVectorXd fk_frame_continuous_vjp(const Eigen::RowVectorXd& cont_row,
                                           const SkeletonSchema& sch, const FrameFk& cache,
                                           const Eigen::RowVectorXd& grad_positions) {
    const int J = static_cast<int>(sch.joints().size());
    std::vector<Eigen::Vector3d> gp(J);
    for (int j = 0; j < J; ++j) gp[j] = grad_positions.segment<3>(3 * j).transpose();
    std::vector<Eigen::Matrix3d> gR;
    Eigen::Vector3d groot;
    fk_frame_vjp(cache, sch, gp, &gR, &groot);

    Eigen::RowVectorXd grad = Eigen::RowVectorXd::Zero(sch.continuous_dim());
    grad.head<3>() = groot.transpose();
    for (int j = 0; j < J; ++j) {
        const auto& js = sch.joints()[j];
        if (js.group == JointGroup::Jaw) continue;
        const int co = sch.continuous_offset(j);
        if (js.dof == 3) {
            const Eigen::Vector3d a1 = cont_row.segment<3>(co).transpose();
            const Eigen::Vector3d a2 = cont_row.segment<3>(co + 3).transpose();
            const double n1 = a1.norm();
            if (n1 < repr::kEpsGs) continue;  // identity fallback: zero gradient
            const Eigen::Vector3d b1 = a1 / n1;
            const Eigen::Vector3d r = a2 - b1.dot(a2) * b1;
            const double n2 = r.norm();
            if (n2 < repr::kEpsGs) continue;
            const Eigen::Vector3d b2 = r / n2;
            const Eigen::Matrix3d& G = gR[j];
            const Eigen::Vector3d g_b3 = G.col(2);
            Eigen::Vector3d g_b2 = G.col(1) + g_b3.cross(b1);
            Eigen::Vector3d g_b1 = G.col(0) + b2.cross(g_b3);
            const Eigen::Vector3d g_r = (g_b2 - b2 * b2.dot(g_b2)) / n2;
            const Eigen::Vector3d g_a2 = g_r - b1 * b1.dot(g_r);
            g_b1 += -b1.dot(g_r) * a2 - b1.dot(a2) * g_r;
            const Eigen::Vector3d g_a1 = (g_b1 - b1 * b1.dot(g_b1)) / n1;
            grad.segment<3>(co) = g_a1.transpose();
            grad.segment<3>(co + 3) = g_a2.transpose();
        } else {
            const double c = cont_row(co), s = cont_row(co + 1);
            const double n = std::hypot(c, s);
            if (n < repr::kEpsGs) continue;
            const Eigen::Matrix3d K = skew(js.axis);
            const Eigen::Matrix3d K2 = K * K;
            const double g_sn = (gR[j].array() * K.array()).sum();
            const double g_cn = -(gR[j].array() * K2.array()).sum();
            const double n3 = n * n * n;
            grad(co) = g_cn * (s * s) / n3 - g_sn * (c * s) / n3;
            grad(co + 1) = -g_cn * (c * s) / n3 + g_sn * (c * c) / n3;
        }
    }
    return grad;
}

double fk_jacobian_check(const MotionSequence& m, const SkeletonSchema& sch, double h,
                         uint64_t seed) {
    if (h < 1e-7 || h > 1e-3) throw ConfigError("fk_jacobian_check: h out of [1e-7, 1e-3]");
    Rng rng(seed);
    const long T = m.frames.rows();
    const int J = static_cast<int>(sch.joints().size());
    Eigen::RowVectorXd w(3 * J);
    for (int i = 0; i < 3 * J; ++i) w(i) = rng.normal();

    double max_rel = 0.0;
    for (long t = 0; t < T; ++t) {
        Eigen::RowVectorXd row = m.frames.row(t);
        FrameFk cache;
        fk_frame_native(row, sch, &cache);
        const Eigen::RowVectorXd g = fk_frame_native_vjp(row, sch, cache, w);
        for (int d = 0; d < sch.native_pose_dim(); ++d) {
            Eigen::RowVectorXd rp = row, rm = row;
            rp(d) += h;
            rm(d) -= h;
            const double fp = fk_frame_native(rp, sch).dot(w);
            const double fm = fk_frame_native(rm, sch).dot(w);
            const double fd = (fp - fm) / (2.0 * h);
            const double scale = std::max({std::abs(fd), std::abs(g(d)), 1e-6});
            max_rel = std::max(max_rel, std::abs(fd - g(d)) / scale);
        }
    }
    return max_rel;
}

ContactMask detect_contacts(const JointPositions& p, const SkeletonSchema& sch, double h_thresh,
                            double v_thresh) {
    if (h_thresh <= 0 || v_thresh <= 0) throw ConfigError("detect_contacts: thresholds must be positive");
    const long T = p.positions.rows();
    const int F = static_cast<int>(sch.foot_joints().size());
    const int up = static_cast<int>(sch.up_axis());
    ContactMask out;
    out.mask.setZero(T, F);
    for (int f = 0; f < F; ++f) {
        const int j = sch.foot_joints()[f];
        for (long t = 0; t < T; ++t) {
            const Eigen::Vector3d pos = p.at(t, j);
            // speed from the adjacent frame interval (forward at t=0)
            double speed = 0.0;
            if (T > 1) {
                const long a = t == 0 ? 0 : t - 1;
                const long b = t == 0 ? 1 : t;
                speed = (p.at(b, j) - p.at(a, j)).norm() * p.fps;
            }
            out.mask(t, f) = (pos[up] < h_thresh && speed < v_thresh) ? 1 : 0;
        }
    }
    return out;
}

FkLossResult fk_loss(const JointPositions& pred, const JointPositions& target,
                     const ContactMask& mask, const SkeletonSchema& sch, const FkLossWeights& w) {
    FkLossResult r;
    fk_loss_grad(pred, target, mask, sch, w, &r);
    return r;
}

Eigen::MatrixXd fk_loss_grad(const JointPositions& pred, const JointPositions& target,
                             const ContactMask& mask, const SkeletonSchema& sch,
                             const FkLossWeights& w, FkLossResult* value) {
    if (pred.positions.rows() != target.positions.rows() ||
        pred.positions.cols() != target.positions.cols())
        throw ShapeError("fk_loss: shape mismatch");
    const long T = pred.positions.rows();
    const int J = static_cast<int>(pred.positions.cols() / 3);
    if (mask.mask.rows() != 0 && mask.mask.rows() != T)
        throw ShapeError("fk_loss: mask length mismatch");

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(T, pred.positions.cols());
    FkLossResult r;

    // Position term: mean over T*J of squared 3-vector error.
    const Eigen::MatrixXd diff = pred.positions - target.positions;
    const double npos = static_cast<double>(T) * J;
    r.position = w.lambda_pos * diff.array().square().sum() / npos;
    grad += (2.0 * w.lambda_pos / npos) * diff;

    // Linear-velocity term on per-frame differences.
    if (T >= 2) {
        const Eigen::MatrixXd dvel = (pred.positions.bottomRows(T - 1) - pred.positions.topRows(T - 1)) -
                                     (target.positions.bottomRows(T - 1) - target.positions.topRows(T - 1));
        const double nvel = static_cast<double>(T - 1) * J;
        r.velocity = w.lambda_linvel * dvel.array().square().sum() / nvel;
        const Eigen::MatrixXd g = (2.0 * w.lambda_linvel / nvel) * dvel;
        grad.bottomRows(T - 1) += g;
        grad.topRows(T - 1) -= g;
    }

    // Contact: mean squared per-frame displacement of predicted feet over
    // intervals where the target foot is in contact at both ends. Empty mask
    // contributes 0.
    if (mask.mask.rows() == T && mask.mask.cols() > 0 && T >= 2) {
        if (mask.mask.cols() != static_cast<long>(sch.foot_joints().size()))
            throw ShapeError("fk_loss: mask column count does not match schema foot list");
        std::vector<std::pair<long, int>> hits;  // (interval start, foot joint)
        for (int f = 0; f < mask.mask.cols(); ++f) {
            const int j = sch.foot_joints()[f];
            for (long t = 0; t + 1 < T; ++t)
                if (mask.mask(t, f) && mask.mask(t + 1, f)) hits.emplace_back(t, j);
        }
        if (!hits.empty()) {
            double sum = 0.0;
            for (auto [t, j] : hits) {
                const Eigen::Vector3d d = pred.at(t + 1, j) - pred.at(t, j);
                sum += d.squaredNorm();
                const Eigen::RowVector3d g =
                    (2.0 * w.lambda_contact / static_cast<double>(hits.size())) * d.transpose();
                grad.block<1, 3>(t + 1, 3 * j) += g;
                grad.block<1, 3>(t, 3 * j) -= g;
            }
            r.contact = w.lambda_contact * sum / static_cast<double>(hits.size());
        }
    }
    if (value) {
        r.total = r.position + r.velocity + r.contact;
        *value = r;
    }
    return grad;
}

}  // namespace dc::kin
