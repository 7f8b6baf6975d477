#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "dc/kinematics.hpp"
#include "dc/schema.hpp"

namespace dc::eval {

enum class FeatureKind { Kinetic, Geometric };

struct FeatureVector {
    FeatureKind kind = FeatureKind::Kinetic;
    Eigen::VectorXd values;
};

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // symmetric, eigenvalues clamped at -1e-8
    long n = 0;
};

// Relational boolean predicate averaged over frames.
struct GeometricPredicate {
    enum class Type { JointAbove, PairWithin };
    std::string name;
    Type type = Type::JointAbove;
    std::string joint_a;
    std::string joint_b;      // PairWithin only
    double threshold = 0.0;   // height (m) or distance (m)
};

// Per-joint mean kinetic energy 1/2 |v|^2 with v = fps * dP, length J.
FeatureVector kinetic_features(const kin::JointPositions& p, double fps);

FeatureVector geometric_features(const kin::JointPositions& p, const schema::SkeletonSchema& sch,
                                 const std::vector<GeometricPredicate>& predicates);

// The 16 height/proximity predicates shipped as the default config.
std::vector<GeometricPredicate> default_predicates();
std::vector<GeometricPredicate> predicates_from_json(const std::string& json_text);
std::string predicates_to_json(const std::vector<GeometricPredicate>& preds);

GaussianStats fit_gaussian(const std::vector<FeatureVector>& features);

// Symmetric PSD square root via eigendecomposition, negative eigenvalues
// clamped to zero.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2), clamped at 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Mean pairwise Euclidean distance over `pairs` seeded random distinct pairs,
// or every pair when that many do not exist.
double diversity(const std::vector<FeatureVector>& features, long pairs, uint64_t seed);

}  // namespace dc::eval
