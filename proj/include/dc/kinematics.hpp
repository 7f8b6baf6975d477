#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "dc/repr.hpp"
#include "dc/schema.hpp"

namespace dc::kin {

// World-frame joint positions, T x 3J row-major (x,y,z per joint).
struct JointPositions {
    std::string schema_id;
    double fps = 30.0;
    Eigen::MatrixXd positions;

    Eigen::Vector3d at(long t, int j) const { return positions.block<1, 3>(t, 3 * j).transpose(); }
};

// T x F, one column per configured foot joint.
struct ContactMask {
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> mask;
};

struct FkLossWeights {
    double lambda_pos = 1.0;
    double lambda_linvel = 0.5;
    double lambda_contact = 1.0;
};

struct FkLossResult {
    double total = 0.0;
    double position = 0.0;
    double velocity = 0.0;
    double contact = 0.0;
};

// Cached single-frame FK state, reusable for the backward pass.
struct FrameFk {
    std::vector<Eigen::Matrix3d> local;  // R_j
    std::vector<Eigen::Matrix3d> world;  // W_j
    std::vector<Eigen::Vector3d> pos;    // p_j
};

JointPositions forward_kinematics(const repr::MotionSequence& m,
                                  const schema::SkeletonSchema& sch);

// FK of one frame given per-joint local rotations and root translation.
FrameFk fk_frame(const Eigen::Vector3d& root_translation,
                 const std::vector<Eigen::Matrix3d>& local_rotations,
                 const schema::SkeletonSchema& sch);

// Reverse pass of the kinematic chain: given dL/dp_j for every joint,
// produces dL/dR_j (local) and dL/dt_root.
void fk_frame_vjp(const FrameFk& fk, const schema::SkeletonSchema& sch,
                  const std::vector<Eigen::Vector3d>& grad_pos,
                  std::vector<Eigen::Matrix3d>* grad_local, Eigen::Vector3d* grad_root);

// Differentiable pose -> positions, native (Euler) parametrization.
Eigen::RowVectorXd fk_frame_native(const Eigen::RowVectorXd& native_row,
                                   const schema::SkeletonSchema& sch, FrameFk* cache = nullptr);
Eigen::RowVectorXd fk_frame_native_vjp(const Eigen::RowVectorXd& native_row,
                                       const schema::SkeletonSchema& sch, const FrameFk& cache,
                                       const Eigen::RowVectorXd& grad_positions);

// Differentiable pose -> positions, unnormalized continuous parametrization
// (Gram-Schmidt 6D blocks and sin-cos pairs). Degenerate blocks fall back to
// identity with zero gradient.
Eigen::RowVectorXd fk_frame_continuous(const Eigen::RowVectorXd& cont_row,
                                       const schema::SkeletonSchema& sch,
                                       FrameFk* cache = nullptr);
Eigen::RowVectorXd fk_frame_continuous_vjp(const Eigen::RowVectorXd& cont_row,
                                           const schema::SkeletonSchema& sch, const FrameFk& cache,
                                           const Eigen::RowVectorXd& grad_positions);

// Central-finite-difference validation of the analytic FK gradient on a
// random linear functional of the positions. Returns the max relative error.
double fk_jacobian_check(const repr::MotionSequence& m, const schema::SkeletonSchema& sch,
                         double h, uint64_t seed = 7);

ContactMask detect_contacts(const JointPositions& p, const schema::SkeletonSchema& sch,
                            double h_thresh = 0.05, double v_thresh = 0.30);

FkLossResult fk_loss(const JointPositions& pred, const JointPositions& target,
                     const ContactMask& mask, const schema::SkeletonSchema& sch,
                     const FkLossWeights& w = {});

// dL/d(pred positions) for the same loss; shape matches pred.positions.
Eigen::MatrixXd fk_loss_grad(const JointPositions& pred, const JointPositions& target,
                             const ContactMask& mask, const schema::SkeletonSchema& sch,
                             const FkLossWeights& w = {}, FkLossResult* value = nullptr);

}  // namespace dc::kin
