#include "dc/flow.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "dc/error.hpp"

namespace dc::flow {

Eigen::MatrixXd interpolate(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& x1, double t) {
    if (x0.rows() != x1.rows() || x0.cols() != x1.cols())
        throw ShapeError("interpolate: endpoint shape mismatch");
    return (1.0 - t) * x0 + t * x1;
}

VelocityGroups velocity_groups(const schema::SkeletonSchema& sch, bool native_space,
                               bool root_to_body) {
    const schema::DimLayout layout = sch.dim_layout();
    const schema::SpaceLayout& sp = native_space ? layout.native : layout.continuous;
    VelocityGroups g;
    g.rot = sp.global_rotation;
    g.body = sp.body_rotation;
    g.hand = sp.hand_rotation;
    // Jaw channels exist only in native space; they travel with the body group.
    g.body.insert(g.body.end(), sp.jaw_rotation.begin(), sp.jaw_rotation.end());
    auto& root_dst = root_to_body ? g.body : g.rot;
    root_dst.insert(root_dst.end(), sp.root_translation.begin(), sp.root_translation.end());
    g.covered_dim = static_cast<int>(g.rot.size() + g.body.size() + g.hand.size());
    return g;
}

ad::Ptr anatomy_velocity_loss(const ad::Ptr& v_hat, const Eigen::MatrixXd& v_target,
                              const VelocityGroups& groups, const LossWeights& w,
                              VelLossBreakdown* breakdown) {
    if (v_hat->val.rows() != v_target.rows() || v_hat->val.cols() != v_target.cols())
        throw ShapeError("anatomy_velocity_loss: prediction/target shape mismatch");
    if (groups.covered_dim != v_hat->val.cols())
        throw LayoutError("anatomy_velocity_loss: groups cover " +
                          std::to_string(groups.covered_dim) + " of " +
                          std::to_string(v_hat->val.cols()) + " dims");
    ad::Graph* g = v_hat->graph;
    const ad::Ptr tgt = g->constant(v_target);
    // schemas without a group (e.g. no tagged hand joints) contribute zero
    auto group_mse = [&](const std::vector<int>& cols) {
        return cols.empty() ? g->scalar(0.0) : ad::mse_cols(v_hat, tgt, cols);
    };
    const ad::Ptr l_rot = group_mse(groups.rot);
    const ad::Ptr l_body = group_mse(groups.body);
    const ad::Ptr l_hand = group_mse(groups.hand);
    const ad::Ptr total = ad::add(ad::add(ad::scale(l_rot, w.lambda_rot),
                                          ad::scale(l_body, w.lambda_body)),
                                  ad::scale(l_hand, w.lambda_hand));
    if (breakdown) {
        breakdown->rot = l_rot->scalar();
        breakdown->body = l_body->scalar();
        breakdown->hand = l_hand->scalar();
        breakdown->total = total->scalar();
    }
    return total;
}

ReconSmooth reconstruction_and_smoothing(ad::Graph& g, const Eigen::MatrixXd& x_t, double t,
                                         const ad::Ptr& v_hat, const Eigen::MatrixXd& x0_bar,
                                         const LossWeights& w) {
    if (x_t.rows() != v_hat->val.rows() || x_t.cols() != v_hat->val.cols())
        throw ShapeError("reconstruction_and_smoothing: x_t/v_hat shape mismatch");
    if (x_t.rows() != x0_bar.rows() || x_t.cols() != x0_bar.cols())
        throw ShapeError("reconstruction_and_smoothing: x_t/x0_bar shape mismatch");
    ReconSmooth out;
    out.x0_hat = ad::cadd(ad::scale(v_hat, -t), x_t);
    out.l_x0 = ad::scale(ad::mse(out.x0_hat, g.constant(x0_bar)), w.lambda_x0);
    const long T = x_t.rows();
    if (T < 2) {
        out.l_smooth = g.scalar(0.0);
        return out;
    }
    const Eigen::MatrixXd d1_bar = x0_bar.bottomRows(T - 1) - x0_bar.topRows(T - 1);
    const ad::Ptr d1 = ad::diff_rows(out.x0_hat);
    ad::Ptr smooth = ad::scale(ad::mse(d1, g.constant(d1_bar)), w.lambda_v);
    if (T >= 3) {
        const Eigen::MatrixXd d2_bar = d1_bar.bottomRows(T - 2) - d1_bar.topRows(T - 2);
        const ad::Ptr d2 = ad::diff_rows(d1);
        smooth = ad::add(smooth, ad::scale(ad::mse(d2, g.constant(d2_bar)), w.lambda_a));
    }
    out.l_smooth = smooth;
    return out;
}

ad::Ptr fk_loss_node(const ad::Ptr& pred_positions, const kin::JointPositions& target,
                     const kin::ContactMask& mask, const schema::SkeletonSchema& sch,
                     const kin::FkLossWeights& w, kin::FkLossResult* value) {
    kin::JointPositions pred;
    pred.schema_id = target.schema_id;
    pred.fps = target.fps;
    pred.positions = pred_positions->val;
    kin::FkLossResult res;
    // The loss gradient is evaluated eagerly; node values are fixed once created.
    Eigen::MatrixXd gp = kin::fk_loss_grad(pred, target, mask, sch, w, &res);
    if (value) *value = res;
    ad::Graph* g = pred_positions->graph;
    Eigen::MatrixXd out = Eigen::MatrixXd::Constant(1, 1, res.total);
    return g->track(std::move(out), pred_positions->requires_grad, {pred_positions},
                    [gp = std::move(gp)](ad::Node& n) {
                        if (n.parents[0]->requires_grad) n.parents[0]->grad += n.grad(0, 0) * gp;
                    });
}

ad::Ptr total_loss_graph(ad::Graph& g, const model::BoundParams& bp, const TrainItem& item,
                         double t, const Eigen::MatrixXd& x1, const LossConfig& cfg,
                         const schema::SkeletonSchema& sch, const repr::NormStats& stats,
                         const VelocityGroups& groups, bool drop_cond, LossComponents* comps,
                         bool training, Rng* dropout_rng) {
    if (t < cfg.t_min || t > 1.0)
        throw RangeError("total_loss_graph: t outside [t_min, 1]");
    const Eigen::MatrixXd x_t = interpolate(item.x0_bar, x1, t);
    const Eigen::MatrixXd v_target = x1 - item.x0_bar;

    model::ConditioningBundle cond;
    cond.tokens = item.tokens;
    cond.identity = item.identity;
    cond.timestep = t;
    cond.drop_text = drop_cond;
    cond.drop_identity = drop_cond;

    const ad::Ptr v_hat = model::forward(g, bp, x_t, cond, training, dropout_rng);

    VelLossBreakdown vb;
    const ad::Ptr l_vel = anatomy_velocity_loss(v_hat, v_target, groups, cfg.weights, &vb);
    const ReconSmooth rs = reconstruction_and_smoothing(g, x_t, t, v_hat, item.x0_bar, cfg.weights);

    ad::Ptr total = ad::add(l_vel, ad::add(rs.l_x0, rs.l_smooth));
    kin::FkLossResult fkres;
    if (cfg.use_fk_loss) {
        const long T = x_t.rows();
        const int D = static_cast<int>(x_t.cols());
        ad::Ptr unnorm;
        bool native = false;
        if (cfg.mode == ReprMode::Hybrid260) {
            Eigen::RowVectorXd scale_row = Eigen::RowVectorXd::Constant(D, stats.sigma_rot);
            Eigen::RowVectorXd offset_row = Eigen::RowVectorXd::Zero(D);
            const auto& root = sch.dim_layout().continuous.root_translation;
            for (size_t i = 0; i < root.size(); ++i) {
                scale_row(root[i]) = stats.trans_std(static_cast<long>(i));
                offset_row(root[i]) = stats.trans_mean(static_cast<long>(i));
            }
            unnorm = ad::cadd(ad::cmul(rs.x0_hat, scale_row), offset_row.replicate(T, 1));
        } else {
            unnorm = ad::cadd(ad::cmul(rs.x0_hat, stats.std_native.transpose()),
                              stats.mean_native.transpose().replicate(T, 1));
            native = true;
        }
        const ad::Ptr pos = ad::fk_positions(unnorm, sch, native);
        const ad::Ptr l_fk =
            fk_loss_node(pos, item.gt_positions, item.contacts, sch, cfg.fk_weights, &fkres);
        total = ad::add(total, l_fk);
    }
    if (comps) {
        comps->vel = vb.total;
        comps->vel_rot = vb.rot;
        comps->vel_body = vb.body;
        comps->vel_hand = vb.hand;
        comps->x0 = rs.l_x0->scalar();
        comps->smooth = rs.l_smooth->scalar();
        comps->fk = fkres.total;
        comps->total = total->scalar();
    }
    return total;
}

Eigen::MatrixXd integrate_euler(const VelocityFn& v, Eigen::MatrixXd x1,
                                const SamplerConfig& cfg) {
    if (cfg.steps < 1) throw ConfigError("integrate_euler: steps must be >= 1");
    const double w = cfg.guidance_scale;
    const double dt = 1.0 / static_cast<double>(cfg.steps);
    Eigen::MatrixXd x = std::move(x1);
    for (int k = 0; k < cfg.steps; ++k) {
        const double t = 1.0 - static_cast<double>(k) * dt;
        Eigen::MatrixXd vel;
        // w=1 and w=0 query a single branch so the result is bit-identical
        // to unguided conditional/unconditional integration.
        if (w == 1.0) {
            vel = v(x, t, true);
        } else if (w == 0.0) {
            vel = v(x, t, false);
        } else {
            const Eigen::MatrixXd vu = v(x, t, false);
            const Eigen::MatrixXd vc = v(x, t, true);
            vel = vu + w * (vc - vu);
        }
        if (vel.rows() != x.rows() || vel.cols() != x.cols())
            throw ShapeError("integrate_euler: velocity shape mismatch at step " +
                             std::to_string(k));
        if (!vel.allFinite())
            throw NonFiniteError("integrate_euler: non-finite velocity at step " +
                                 std::to_string(k));
        x -= dt * vel;
        if (!x.allFinite())
            throw NonFiniteError("integrate_euler: non-finite state at step " +
                                 std::to_string(k));
    }
    return x;
}

namespace {

Eigen::MatrixXd sample_noise(long rows, long cols, uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(rows, cols);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) x(r, c) = rng.normal();
    return x;
}

Eigen::MatrixXd run_model_sampler(const model::ModelParams& params,
                                  const model::ConditioningBundle& cond, long frames,
                                  const SamplerConfig& sampler, bool use_ema, int data_dim) {
    if (frames < 1) throw ConfigError("sample: frames must be >= 1");
    Eigen::MatrixXd x1 = sample_noise(frames, data_dim, sampler.seed);
    VelocityFn fn = [&](const Eigen::MatrixXd& x, double t, bool conditional) {
        model::ConditioningBundle c = cond;
        c.timestep = t;
        c.drop_text = !conditional;
        c.drop_identity = !conditional;
        return model::forward_value(params, x, c, use_ema);
    };
    return integrate_euler(fn, std::move(x1), sampler);
}

}  // namespace

repr::MotionSequence sample(const model::ModelParams& params,
                            const model::ConditioningBundle& cond, long frames,
                            const SamplerConfig& sampler, const repr::NormStats& stats,
                            const schema::SkeletonSchema& sch, repr::DecodeDiagnostics* diag,
                            bool use_ema, double fps) {
    const Eigen::MatrixXd x0 =
        run_model_sampler(params, cond, frames, sampler, use_ema, params.config.data_dim);
    repr::ContinuousMotion c;
    c.schema_id = sch.name();
    c.fps = fps;
    c.frames = x0;
    c.normalized = true;
    repr::ContinuousMotion raw = repr::denormalize(c, stats);
    repr::MotionSequence m = repr::decode_sequence(raw, sch, diag);
    m.identity = cond.identity;
    return m;
}

repr::MotionSequence sample_zscore136(const model::ModelParams& params,
                                      const model::ConditioningBundle& cond, long frames,
                                      const SamplerConfig& sampler, const repr::NormStats& stats,
                                      const schema::SkeletonSchema& sch, bool use_ema,
                                      double fps) {
    const Eigen::MatrixXd x0 =
        run_model_sampler(params, cond, frames, sampler, use_ema, params.config.data_dim);
    repr::MotionSequence m;
    m.schema_id = sch.name();
    m.fps = fps;
    m.frames = repr::denormalize_native(x0, stats);
    m.identity = cond.identity;
    return m;
}

TrainResult train_loop(const std::vector<TrainItem>& dataset, const TrainConfig& cfg,
                       const schema::SkeletonSchema& sch, const repr::NormStats& stats) {
    if (dataset.empty()) throw EmptyDataset("train_loop: empty dataset");
    if (cfg.batch < 1) throw ConfigError("train_loop: batch must be >= 1");
    for (const auto& item : dataset)
        if (item.x0_bar.cols() != cfg.model.data_dim)
            throw DimensionError("train_loop: item dim " + std::to_string(item.x0_bar.cols()) +
                                 " != model data_dim " + std::to_string(cfg.model.data_dim));

    TrainResult out;
    out.params = model::ModelParams::init(cfg.model, cfg.seed);
    out.opt_state = model::AdamWState::init(out.params);

    const VelocityGroups groups =
        velocity_groups(sch, cfg.loss.mode == ReprMode::Zscore136, true);
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        if (!log) throw ConfigError("train_loop: cannot open log file " + cfg.log_path);
    }

    model::ModelParams last_good = out.params;
    model::AdamWState last_good_state = out.opt_state;
    long last_good_step = 0;

    const long n = static_cast<long>(dataset.size());
    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<Eigen::MatrixXd> grads(out.params.tensors.size());
        for (size_t i = 0; i < grads.size(); ++i)
            grads[i] = Eigen::MatrixXd::Zero(out.params.tensors[i].rows(),
                                             out.params.tensors[i].cols());
        LossComponents mean{};
        bool bad = false;
        for (int b = 0; b < cfg.batch && !bad; ++b) {
            const TrainItem& item = dataset[static_cast<size_t>(rng.below(
                static_cast<uint64_t>(n)))];
            const double t = cfg.loss.t_min + rng.uniform() * (1.0 - cfg.loss.t_min);
            Eigen::MatrixXd x1(item.x0_bar.rows(), item.x0_bar.cols());
            for (long r = 0; r < x1.rows(); ++r)
                for (long c = 0; c < x1.cols(); ++c) x1(r, c) = rng.normal();
            const bool drop = rng.uniform() < cfg.cond_drop_prob;

            ad::Graph g;
            const model::BoundParams bp = model::bind(g, out.params, true, false);
            LossComponents comps{};
            const ad::Ptr loss = total_loss_graph(g, bp, item, t, x1, cfg.loss, sch, stats,
                                                  groups, drop, &comps, true, &rng);
            if (!std::isfinite(loss->scalar())) {
                bad = true;
                break;
            }
            g.backward(loss);
            for (size_t i = 0; i < grads.size(); ++i) grads[i] += bp.leaves[i]->grad;
            mean.vel += comps.vel;
            mean.vel_rot += comps.vel_rot;
            mean.vel_body += comps.vel_body;
            mean.vel_hand += comps.vel_hand;
            mean.x0 += comps.x0;
            mean.smooth += comps.smooth;
            mean.fk += comps.fk;
            mean.total += comps.total;
        }
        if (!bad) {
            const double inv = 1.0 / static_cast<double>(cfg.batch);
            for (auto& gmat : grads) gmat *= inv;
            mean.vel *= inv;
            mean.vel_rot *= inv;
            mean.vel_body *= inv;
            mean.vel_hand *= inv;
            mean.x0 *= inv;
            mean.smooth *= inv;
            mean.fk *= inv;
            mean.total *= inv;
            try {
                model::optimizer_step(out.params, out.opt_state, grads, cfg.opt);
            } catch (const NonFiniteError&) {
                bad = true;
            }
        }
        if (bad) {
            out.params = last_good;
            out.opt_state = last_good_state;
            out.step = last_good_step;
            out.aborted = true;
            if (log) {
                log << nlohmann::json{{"step", step}, {"event", "non_finite_abort"},
                                      {"restored_step", last_good_step}}
                    << "\n";
            }
            if (cfg.checkpoint_cb) cfg.checkpoint_cb(out);
            return out;
        }
        last_good = out.params;
        last_good_state = out.opt_state;
        last_good_step = step;
        out.history.push_back(mean);
        if (cfg.checkpoint_cb && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            out.step = step;
            cfg.checkpoint_cb(out);
        }
        if (log && cfg.log_every > 0 && step % cfg.log_every == 0) {
            log << nlohmann::json{{"step", step},
                                  {"loss", mean.total},
                                  {"vel", mean.vel},
                                  {"vel_rot", mean.vel_rot},
                                  {"vel_body", mean.vel_body},
                                  {"vel_hand", mean.vel_hand},
                                  {"x0", mean.x0},
                                  {"smooth", mean.smooth},
                                  {"fk", mean.fk}}
                << "\n";
        }
    }
    out.step = cfg.steps;
    return out;
}

}  // namespace dc::flow
