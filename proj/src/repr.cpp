#include "dc/repr.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "dc/error.hpp"

namespace dc::repr {

using schema::Axis;
using schema::JointGroup;
using schema::RotationOrder;
using schema::SkeletonSchema;

Eigen::Matrix3d elementary_rotation(Axis axis, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    const int i = static_cast<int>(axis);
    const int u = (i + 1) % 3, w = (i + 2) % 3;
    R(u, u) = c;
    R(w, w) = c;
    R(w, u) = s;
    R(u, w) = -s;
    return R;
}

Eigen::Matrix3d euler_to_matrix(const Eigen::Vector3d& angles, const RotationOrder& order) {
    return elementary_rotation(order.axes[0], angles[0]) *
           elementary_rotation(order.axes[1], angles[1]) *
           elementary_rotation(order.axes[2], angles[2]);
}

namespace {

// Sign of the axis permutation: +1 for XYZ, YZX, ZXY.
int perm_sign(const RotationOrder& order) {
    const int i = static_cast<int>(order.axes[0]);
    const int j = static_cast<int>(order.axes[1]);
    return ((j - i + 3) % 3 == 1) ? 1 : -1;
}

double clamp1(double v) { return v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

Eigen::Vector3d matrix_to_euler(const Eigen::Matrix3d& R, const RotationOrder& order) {
    const int i = static_cast<int>(order.axes[0]);
    const int j = static_cast<int>(order.axes[1]);
    const int k = static_cast<int>(order.axes[2]);
    const double eps = perm_sign(order);

    const double sb = clamp1(eps * R(i, k));
    const double b = std::asin(sb);
    const double cb = std::sqrt(std::max(0.0, 1.0 - sb * sb));

    Eigen::Vector3d out;
    out[1] = b;
    if (cb > 1e-7) {
        out[0] = std::atan2(-eps * R(j, k), R(k, k));
        out[2] = std::atan2(-eps * R(i, j), R(i, i));
    } else {
        // Gimbal lock: fix the third angle to 0 and solve R = R_i(a) R_j(b).
        out[2] = 0.0;
        const Eigen::Matrix3d M = R * elementary_rotation(order.axes[1], b).transpose();
        const int u = (i + 1) % 3, w = (i + 2) % 3;
        out[0] = std::atan2(M(w, u), M(u, u));
    }
    return out;
}

Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& unit_axis, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Eigen::Matrix3d K;
    K << 0, -unit_axis.z(), unit_axis.y(), unit_axis.z(), 0, -unit_axis.x(), -unit_axis.y(),
        unit_axis.x(), 0;
    return Eigen::Matrix3d::Identity() + s * K + (1.0 - c) * (K * K);
}

Eigen::Matrix<double, 6, 1> matrix_to_6d(const Eigen::Matrix3d& R) {
    Eigen::Matrix<double, 6, 1> v;
    v << R(0, 0), R(1, 0), R(2, 0), R(0, 1), R(1, 1), R(2, 1);
    return v;
}

Eigen::Matrix3d sixd_to_matrix(const Eigen::Matrix<double, 6, 1>& v) {
    const Eigen::Vector3d a1 = v.head<3>();
    const Eigen::Vector3d a2 = v.tail<3>();
    const double n1 = a1.norm();
    if (n1 < kEpsGs) throw DegenerateInput("6D block: first vector norm below epsilon");
    const Eigen::Vector3d b1 = a1 / n1;
    const Eigen::Vector3d r = a2 - b1.dot(a2) * b1;
    const double n2 = r.norm();
    if (n2 < kEpsGs) throw DegenerateInput("6D block: second vector collinear with first");
    const Eigen::Vector3d b2 = r / n2;
    Eigen::Matrix3d R;
    R.col(0) = b1;
    R.col(1) = b2;
    R.col(2) = b1.cross(b2);
    return R;
}

std::pair<double, double> angle_to_sincos(double theta) {
    return {std::cos(theta), std::sin(theta)};
}

double sincos_to_angle(double c, double s, bool* degenerate) {
    if (degenerate) *degenerate = false;
    if (std::hypot(c, s) < kEpsGs) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    double t = std::atan2(s, c);
    if (t == -M_PI) t = M_PI;  // canonical branch (-pi, pi]
    return t;
}

ContinuousMotion encode_sequence(const MotionSequence& m, const SkeletonSchema& sch) {
    if (m.frames.cols() != sch.native_pose_dim())
        throw DimensionError("encode_sequence: frames have " + std::to_string(m.frames.cols()) +
                             " cols, schema expects " + std::to_string(sch.native_pose_dim()));
    const long T = m.frames.rows();
    ContinuousMotion out;
    out.schema_id = m.schema_id;
    out.fps = m.fps;
    out.normalized = false;
    out.frames.resize(T, sch.continuous_dim());
    out.frames.leftCols(SkeletonSchema::root_channels) =
        m.frames.leftCols(SkeletonSchema::root_channels);
    for (long t = 0; t < T; ++t) {
        for (size_t ji = 0; ji < sch.joints().size(); ++ji) {
            const auto& j = sch.joints()[ji];
            if (j.group == JointGroup::Jaw) continue;
            const int no = sch.native_offset(static_cast<int>(ji));
            const int co = sch.continuous_offset(static_cast<int>(ji));
            if (j.dof == 3) {
                const Eigen::Vector3d ang = m.frames.block<1, 3>(t, no).transpose();
                out.frames.block<1, 6>(t, co) = matrix_to_6d(euler_to_matrix(ang, j.order)).transpose();
            } else {
                const auto [c, s] = angle_to_sincos(m.frames(t, no));
                out.frames(t, co) = c;
                out.frames(t, co + 1) = s;
            }
        }
    }
    return out;
}

MotionSequence decode_sequence(const ContinuousMotion& c, const SkeletonSchema& sch,
                               DecodeDiagnostics* diag) {
    if (c.frames.cols() != sch.continuous_dim())
        throw DimensionError("decode_sequence: frames have " + std::to_string(c.frames.cols()) +
                             " cols, schema expects " + std::to_string(sch.continuous_dim()));
    const long T = c.frames.rows();
    MotionSequence out;
    out.schema_id = c.schema_id;
    out.fps = c.fps;
    out.frames = Eigen::MatrixXd::Zero(T, sch.native_pose_dim());
    out.frames.leftCols(SkeletonSchema::root_channels) =
        c.frames.leftCols(SkeletonSchema::root_channels);
    if (diag) {
        diag->degenerate_per_frame.assign(static_cast<size_t>(T), 0);
        diag->total_degenerate = 0;
    }
    for (long t = 0; t < T; ++t) {
        for (size_t ji = 0; ji < sch.joints().size(); ++ji) {
            const auto& j = sch.joints()[ji];
            if (j.group == JointGroup::Jaw) continue;  // re-inserted as zeros
            const int no = sch.native_offset(static_cast<int>(ji));
            const int co = sch.continuous_offset(static_cast<int>(ji));
            if (j.dof == 3) {
                Eigen::Vector3d ang = Eigen::Vector3d::Zero();
                try {
                    const Eigen::Matrix3d R =
                        sixd_to_matrix(c.frames.block<1, 6>(t, co).transpose());
                    ang = matrix_to_euler(R, j.order);
                } catch (const DegenerateInput&) {
                    if (diag) {
                        ++diag->degenerate_per_frame[static_cast<size_t>(t)];
                        ++diag->total_degenerate;
                    }
                }
                out.frames.block<1, 3>(t, no) = ang.transpose();
            } else {
                bool degen = false;
                out.frames(t, no) = sincos_to_angle(c.frames(t, co), c.frames(t, co + 1), &degen);
                if (degen && diag) {
                    ++diag->degenerate_per_frame[static_cast<size_t>(t)];
                    ++diag->total_degenerate;
                }
            }
        }
    }
    return out;
}

std::vector<Eigen::Matrix3d> frame_rotations(const Eigen::RowVectorXd& cont_row,
                                             const SkeletonSchema& sch, int* degenerate_count) {
    if (cont_row.size() != sch.continuous_dim())
        throw DimensionError("frame_rotations: bad row width");
    std::vector<Eigen::Matrix3d> R(sch.joints().size(), Eigen::Matrix3d::Identity());
    if (degenerate_count) *degenerate_count = 0;
    for (size_t ji = 0; ji < sch.joints().size(); ++ji) {
        const auto& j = sch.joints()[ji];
        if (j.group == JointGroup::Jaw) continue;
        const int co = sch.continuous_offset(static_cast<int>(ji));
        if (j.dof == 3) {
            try {
                R[ji] = sixd_to_matrix(cont_row.segment<6>(co).transpose());
            } catch (const DegenerateInput&) {
                if (degenerate_count) ++*degenerate_count;
            }
        } else {
            const double c = cont_row(co), s = cont_row(co + 1);
            const double n = std::hypot(c, s);
            if (n < kEpsGs) {
                if (degenerate_count) ++*degenerate_count;
            } else {
                // Rodrigues directly from the normalized pair; equivalent to
                // axis_angle_to_matrix(axis, atan2(s, c)).
                const double cn = c / n, sn = s / n;
                Eigen::Matrix3d K;
                K << 0, -j.axis.z(), j.axis.y(), j.axis.z(), 0, -j.axis.x(), -j.axis.y(),
                    j.axis.x(), 0;
                R[ji] = Eigen::Matrix3d::Identity() + sn * K + (1.0 - cn) * (K * K);
            }
        }
    }
    return R;
}

NormStats fit_norm_stats(const std::vector<ContinuousMotion>& dataset, const SkeletonSchema& sch) {
    long total_frames = 0;
    for (const auto& c : dataset) total_frames += c.frames.rows();
    if (dataset.empty() || total_frames < 2) throw EmptyDataset("fit_norm_stats: need >= 2 frames");

    const int rc = SkeletonSchema::root_channels;
    const int rot_dims = sch.continuous_dim() - rc;

    // sigma_rot: pooled RMS over every rotation dim (manifold values are
    // centered by construction, so no mean subtraction).
    double sumsq = 0.0;
    Eigen::VectorXd tsum = Eigen::VectorXd::Zero(rc);
    for (const auto& c : dataset) {
        if (c.frames.cols() != sch.continuous_dim())
            throw DimensionError("fit_norm_stats: dimension mismatch");
        sumsq += c.frames.rightCols(rot_dims).array().square().sum();
        tsum += c.frames.leftCols(rc).colwise().sum().transpose();
    }
    NormStats st;
    st.mode = NormStats::Mode::Hybrid260;
    st.frame_count = total_frames;
    st.sigma_rot =
        std::max(kEpsStd, std::sqrt(sumsq / (static_cast<double>(total_frames) * rot_dims)));
    st.trans_mean = tsum / static_cast<double>(total_frames);
    Eigen::VectorXd tvar = Eigen::VectorXd::Zero(rc);
    for (const auto& c : dataset) {
        Eigen::MatrixXd d = c.frames.leftCols(rc).rowwise() - st.trans_mean.transpose();
        tvar += d.array().square().colwise().sum().matrix().transpose();
    }
    st.trans_std =
        (tvar / static_cast<double>(total_frames)).array().sqrt().max(kEpsStd).matrix();
    return st;
}

NormStats fit_zscore136(const std::vector<MotionSequence>& dataset, const SkeletonSchema& sch) {
    long total_frames = 0;
    for (const auto& m : dataset) total_frames += m.frames.rows();
    if (dataset.empty() || total_frames < 2) throw EmptyDataset("fit_zscore136: need >= 2 frames");
    const int D = sch.native_pose_dim();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(D);
    for (const auto& m : dataset) {
        if (m.frames.cols() != D) throw DimensionError("fit_zscore136: dimension mismatch");
        sum += m.frames.colwise().sum().transpose();
    }
    NormStats st;
    st.mode = NormStats::Mode::Zscore136;
    st.frame_count = total_frames;
    st.mean_native = sum / static_cast<double>(total_frames);
    Eigen::VectorXd var = Eigen::VectorXd::Zero(D);
    for (const auto& m : dataset) {
        Eigen::MatrixXd d = m.frames.rowwise() - st.mean_native.transpose();
        var += d.array().square().colwise().sum().matrix().transpose();
    }
    st.std_native =
        (var / static_cast<double>(total_frames)).array().sqrt().max(kEpsStd).matrix();
    st.sigma_rot = 1.0;
    st.trans_mean = Eigen::VectorXd::Zero(SkeletonSchema::root_channels);
    st.trans_std = Eigen::VectorXd::Ones(SkeletonSchema::root_channels);
    return st;
}

ContinuousMotion normalize(const ContinuousMotion& c, const NormStats& stats) {
    if (stats.mode != NormStats::Mode::Hybrid260)
        throw ConfigError("normalize: stats are not hybrid-mode");
    const int rc = SkeletonSchema::root_channels;
    if (c.frames.cols() < rc) throw DimensionError("normalize: too few columns");
    ContinuousMotion out = c;
    out.frames.rightCols(c.frames.cols() - rc) /= stats.sigma_rot;
    out.frames.leftCols(rc) =
        ((c.frames.leftCols(rc).rowwise() - stats.trans_mean.transpose()).array().rowwise() /
         stats.trans_std.transpose().array())
            .matrix();
    out.normalized = true;
    return out;
}

ContinuousMotion denormalize(const ContinuousMotion& c, const NormStats& stats) {
    if (stats.mode != NormStats::Mode::Hybrid260)
        throw ConfigError("denormalize: stats are not hybrid-mode");
    const int rc = SkeletonSchema::root_channels;
    if (c.frames.cols() < rc) throw DimensionError("denormalize: too few columns");
    ContinuousMotion out = c;
    out.frames.rightCols(c.frames.cols() - rc) *= stats.sigma_rot;
    out.frames.leftCols(rc) =
        ((c.frames.leftCols(rc).array().rowwise() * stats.trans_std.transpose().array()).rowwise() +
         stats.trans_mean.transpose().array())
            .matrix();
    out.normalized = false;
    return out;
}

Eigen::MatrixXd normalize_native(const Eigen::MatrixXd& frames, const NormStats& stats) {
    if (stats.mode != NormStats::Mode::Zscore136)
        throw ConfigError("normalize_native: stats are not zscore-mode");
    if (frames.cols() != stats.mean_native.size())
        throw DimensionError("normalize_native: dimension mismatch");
    return ((frames.rowwise() - stats.mean_native.transpose()).array().rowwise() /
            stats.std_native.transpose().array())
        .matrix();
}

Eigen::MatrixXd denormalize_native(const Eigen::MatrixXd& frames, const NormStats& stats) {
    if (stats.mode != NormStats::Mode::Zscore136)
        throw ConfigError("denormalize_native: stats are not zscore-mode");
    if (frames.cols() != stats.mean_native.size())
        throw DimensionError("denormalize_native: dimension mismatch");
    return ((frames.array().rowwise() * stats.std_native.transpose().array()).rowwise() +
            stats.mean_native.transpose().array())
        .matrix();
}

}  // namespace dc::repr
