#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dc/autodiff.hpp"
#include "dc/rng.hpp"

namespace dc::model {

struct ModelConfig {
    int layers = 2;
    int hidden_dim = 64;
    int ffn_dim = 256;
    int heads = 4;
    int token_vocab = 4146;
    int l_max = 256;
    double dropout = 0.05;
    double cond_drop_prob = 0.1;
    int data_dim = 260;
    int identity_dim = 68;
    double rope_base = 10000.0;

    int head_dim() const { return hidden_dim / heads; }
    void validate() const;  // throws ConfigError

    // 2-layer/64-dim preset sized so finite-difference suites run in seconds.
    static ModelConfig desk(int data_dim, int token_vocab);
    // 12-layer/1024-dim main-experiment scale (not exercised in CI).
    static ModelConfig paper(int data_dim, int token_vocab);
};

// Flat named-tensor registry. AdaLN modulation projections and the output
// head start at exactly zero so every block is an identity map at init.
struct ModelParams {
    ModelConfig config;
    std::vector<std::string> names;
    std::vector<Eigen::MatrixXd> tensors;
    std::optional<std::vector<Eigen::MatrixXd>> ema_shadow;

    static ModelParams init(const ModelConfig& cfg, uint64_t seed);

    int index_of(const std::string& name) const;
    Eigen::MatrixXd& at(const std::string& name);
    const Eigen::MatrixXd& at(const std::string& name) const;
    long total_scalars() const;
    void assert_finite() const;  // throws NonFiniteError
};

struct ConditioningBundle {
    std::vector<int> tokens;
    Eigen::VectorXd identity;  // identity_dim
    double timestep = 0.0;     // [0, 1]
    bool drop_text = false;
    bool drop_identity = false;
};

// Parameter tensors bound to graph leaves, shared across every forward in
// the same graph so batch gradients accumulate in one place.
struct BoundParams {
    const ModelParams* params = nullptr;
    std::vector<ad::Ptr> leaves;

    const ad::Ptr& leaf(const std::string& name) const;
};

BoundParams bind(ad::Graph& g, const ModelParams& params, bool requires_grad,
                 bool use_ema = false);

// Velocity field v_theta(x_t, t, s, y): T x data_dim in, T x data_dim out.
// `dropout_rng` may be null when training == false.
ad::Ptr forward(ad::Graph& g, const BoundParams& bp, const Eigen::MatrixXd& x_t,
                const ConditioningBundle& cond, bool training = false, Rng* dropout_rng = nullptr);

// Convenience non-graph forward for sampling.
Eigen::MatrixXd forward_value(const ModelParams& params, const Eigen::MatrixXd& x_t,
                              const ConditioningBundle& cond, bool use_ema = false);

// --- optimizer ---

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double ema_decay = 0.9999;
    bool ema_enabled = true;
};

struct AdamWState {
    long step = 0;
    std::vector<Eigen::MatrixXd> m;
    std::vector<Eigen::MatrixXd> v;

    static AdamWState init(const ModelParams& params);
};

// Decoupled-weight-decay Adam update; also advances the EMA shadow.
void optimizer_step(ModelParams& params, AdamWState& state,
                    const std::vector<Eigen::MatrixXd>& grads, const AdamWConfig& cfg);

}  // namespace dc::model
