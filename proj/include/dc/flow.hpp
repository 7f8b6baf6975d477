#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dc/autodiff.hpp"
#include "dc/kinematics.hpp"
#include "dc/model.hpp"
#include "dc/repr.hpp"
#include "dc/schema.hpp"

namespace dc::flow {

struct LossWeights {
    double lambda_rot = 1.0;
    double lambda_body = 1.5;
    double lambda_hand = 0.5;
    double lambda_x0 = 2.0;
    double lambda_v = 0.5;
    double lambda_a = 1.5;
};

struct SamplerConfig {
    int steps = 50;
    double guidance_scale = 1.0;
    uint64_t seed = 0;
};

// Linear path x_t = (1-t) x0 + t x1; the target velocity field is x1 - x0.
Eigen::MatrixXd interpolate(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& x1, double t);

// Column groups for the anatomy-weighted velocity loss. Root-translation
// dims ride with the body group by default (they carry gross locomotion).
struct VelocityGroups {
    std::vector<int> rot;
    std::vector<int> body;
    std::vector<int> hand;
    int covered_dim = 0;
};

VelocityGroups velocity_groups(const schema::SkeletonSchema& sch, bool native_space = false,
                               bool root_to_body = true);

struct VelLossBreakdown {
    double rot = 0.0, body = 0.0, hand = 0.0, total = 0.0;
};

// lambda_rot * MSE_rot + lambda_body * MSE_body + lambda_hand * MSE_hand,
// per-group mean reduction. Throws LayoutError when the groups do not cover
// every column of v_hat.
ad::Ptr anatomy_velocity_loss(const ad::Ptr& v_hat, const Eigen::MatrixXd& v_target,
                              const VelocityGroups& groups, const LossWeights& w,
                              VelLossBreakdown* breakdown = nullptr);

struct ReconSmooth {
    ad::Ptr x0_hat;   // x_t - t * v_hat
    ad::Ptr l_x0;     // lambda_x0 * MSE(x0_hat, x0_bar)
    ad::Ptr l_smooth; // lambda_v * MSE(d x0_hat, d x0_bar) + lambda_a * (second order)
};

ReconSmooth reconstruction_and_smoothing(ad::Graph& g, const Eigen::MatrixXd& x_t, double t,
                                         const ad::Ptr& v_hat, const Eigen::MatrixXd& x0_bar,
                                         const LossWeights& w);

// FK loss as a tape node over predicted joint positions.
ad::Ptr fk_loss_node(const ad::Ptr& pred_positions, const kin::JointPositions& target,
                     const kin::ContactMask& mask, const schema::SkeletonSchema& sch,
                     const kin::FkLossWeights& w, kin::FkLossResult* value = nullptr);

// One training element: normalized target plus precomputed FK supervision.
struct TrainItem {
    Eigen::MatrixXd x0_bar;  // T x data_dim, normalized
    std::vector<int> tokens;
    Eigen::VectorXd identity;
    kin::JointPositions gt_positions;
    kin::ContactMask contacts;
};

enum class ReprMode { Hybrid260, Zscore136 };

struct LossConfig {
    LossWeights weights;
    kin::FkLossWeights fk_weights;
    bool use_fk_loss = true;
    ReprMode mode = ReprMode::Hybrid260;
    double t_min = 1e-4;  // training excludes t in [0, t_min)
};

struct LossComponents {
    double vel = 0.0, vel_rot = 0.0, vel_body = 0.0, vel_hand = 0.0;
    double x0 = 0.0, smooth = 0.0, fk = 0.0, total = 0.0;
};

// Full per-element objective: velocity + reconstruction + smoothing + FK.
ad::Ptr total_loss_graph(ad::Graph& g, const model::BoundParams& bp, const TrainItem& item,
                         double t, const Eigen::MatrixXd& x1, const LossConfig& cfg,
                         const schema::SkeletonSchema& sch, const repr::NormStats& stats,
                         const VelocityGroups& groups, bool drop_cond = false,
                         LossComponents* comps = nullptr, bool training = false,
                         Rng* dropout_rng = nullptr);

// --- sampling ---

// x is the current state, t the current time, conditional selects the CFG
// branch being queried.
using VelocityFn =
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x, double t, bool conditional)>;

// Euler integration from t=1 to t=0 with CFG blending
// v_guided = v_uncond + w (v_cond - v_uncond); w=0 and w=1 short-circuit to
// the single branch so they are bit-identical to it.
Eigen::MatrixXd integrate_euler(const VelocityFn& v, Eigen::MatrixXd x1,
                                const SamplerConfig& cfg);

repr::MotionSequence sample(const model::ModelParams& params,
                            const model::ConditioningBundle& cond, long frames,
                            const SamplerConfig& sampler, const repr::NormStats& stats,
                            const schema::SkeletonSchema& sch,
                            repr::DecodeDiagnostics* diag = nullptr, bool use_ema = true,
                            double fps = 30.0);

// Zscore136 ablation sampling path: model operates on native z-scored frames.
repr::MotionSequence sample_zscore136(const model::ModelParams& params,
                                      const model::ConditioningBundle& cond, long frames,
                                      const SamplerConfig& sampler, const repr::NormStats& stats,
                                      const schema::SkeletonSchema& sch, bool use_ema = true,
                                      double fps = 30.0);

// --- training ---

struct TrainConfig {
    model::ModelConfig model;
    model::AdamWConfig opt;
    LossConfig loss;
    int steps = 3000;
    int batch = 8;
    double cond_drop_prob = 0.1;
    uint64_t seed = 1;
    int log_every = 50;
    std::string log_path;  // JSON lines; empty disables
    int checkpoint_every = 0;  // 0 disables
    std::function<void(const struct TrainResult&)> checkpoint_cb;
};

struct TrainResult {
    model::ModelParams params;
    model::AdamWState opt_state;
    long step = 0;
    bool aborted = false;  // non-finite loss; params hold the last good state
    std::vector<LossComponents> history;  // per-step component means
};

TrainResult train_loop(const std::vector<TrainItem>& dataset, const TrainConfig& cfg,
                       const schema::SkeletonSchema& sch, const repr::NormStats& stats);

}  // namespace dc::flow
