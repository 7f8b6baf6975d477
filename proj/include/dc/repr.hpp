#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "dc/schema.hpp"

namespace dc::repr {

inline constexpr double kEpsStd = 1e-8;
inline constexpr double kEpsGs = 1e-8;

// Native-space motion: T x native_pose_dim frames plus a 68-dim identity.
struct MotionSequence {
    std::string schema_id;
    double fps = 30.0;
    Eigen::MatrixXd frames;     // T x native_pose_dim, rotations in radians
    Eigen::VectorXd identity;   // 68
};

// Manifold-encoded motion: T x continuous_dim.
struct ContinuousMotion {
    std::string schema_id;
    double fps = 30.0;
    Eigen::MatrixXd frames;
    bool normalized = false;
};

struct NormStats {
    enum class Mode { Hybrid260, Zscore136 };
    Mode mode = Mode::Hybrid260;
    double sigma_rot = 1.0;
    Eigen::VectorXd trans_mean;  // 6
    Eigen::VectorXd trans_std;   // 6, floored at kEpsStd
    long frame_count = 0;
    // Zscore136 ablation: per-dimension stats over the raw native pose.
    Eigen::VectorXd mean_native;
    Eigen::VectorXd std_native;
};

struct DecodeDiagnostics {
    std::vector<int> degenerate_per_frame;
    long total_degenerate = 0;
};

// --- rotation primitives ---

Eigen::Matrix3d elementary_rotation(schema::Axis axis, double angle);

// Intrinsic composition R = R_a(t1) * R_b(t2) * R_c(t3) for order (a,b,c).
Eigen::Matrix3d euler_to_matrix(const Eigen::Vector3d& angles, const schema::RotationOrder& order);

// Inverse of euler_to_matrix up to angle-branch choices; the rebuilt matrix
// always matches R. Gimbal lock fixes the third angle to 0.
Eigen::Vector3d matrix_to_euler(const Eigen::Matrix3d& R, const schema::RotationOrder& order);

// Rodrigues rotation about a unit axis.
Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& unit_axis, double angle);

// First two columns of R, flattened column-major: (c0, c1).
Eigen::Matrix<double, 6, 1> matrix_to_6d(const Eigen::Matrix3d& R);

// Gram-Schmidt reconstruction. Throws DegenerateInput when either the first
// vector or the projection residual falls below kEpsGs.
Eigen::Matrix3d sixd_to_matrix(const Eigen::Matrix<double, 6, 1>& v);

std::pair<double, double> angle_to_sincos(double theta);

// atan2 branch in (-pi, pi]; (0,0) maps to 0 with *degenerate set.
double sincos_to_angle(double c, double s, bool* degenerate = nullptr);

// --- sequence transforms ---

ContinuousMotion encode_sequence(const MotionSequence& m, const schema::SkeletonSchema& sch);

MotionSequence decode_sequence(const ContinuousMotion& c, const schema::SkeletonSchema& sch,
                               DecodeDiagnostics* diag = nullptr);

// Per-frame decode of the rotation channels into per-joint rotation matrices,
// skipping the Euler round trip. Used by the differentiable FK path. Row
// `frame` of `cont` must be unnormalized continuous coordinates.
// Jaw joints get identity.
std::vector<Eigen::Matrix3d> frame_rotations(const Eigen::RowVectorXd& cont_row,
                                             const schema::SkeletonSchema& sch,
                                             int* degenerate_count = nullptr);

// --- normalization ---

NormStats fit_norm_stats(const std::vector<ContinuousMotion>& dataset,
                         const schema::SkeletonSchema& sch);

// Ablation: plain per-dimension z-score over the raw native pose.
NormStats fit_zscore136(const std::vector<MotionSequence>& dataset,
                        const schema::SkeletonSchema& sch);

ContinuousMotion normalize(const ContinuousMotion& c, const NormStats& stats);
ContinuousMotion denormalize(const ContinuousMotion& c, const NormStats& stats);

// Zscore136 companions operating on raw native frames.
Eigen::MatrixXd normalize_native(const Eigen::MatrixXd& frames, const NormStats& stats);
Eigen::MatrixXd denormalize_native(const Eigen::MatrixXd& frames, const NormStats& stats);

}  // namespace dc::repr
