#include "dc/eval.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "dc/error.hpp"
#include "dc/rng.hpp"

namespace dc::eval {

using nlohmann::json;

FeatureVector kinetic_features(const kin::JointPositions& p, double fps) {
    const long T = p.positions.rows();
    if (T < 2) throw ShapeError("kinetic_features: need T >= 2");
    const int J = static_cast<int>(p.positions.cols() / 3);
    FeatureVector f;
    f.kind = FeatureKind::Kinetic;
    f.values = Eigen::VectorXd::Zero(J);
    for (int j = 0; j < J; ++j) {
        double acc = 0.0;
        for (long t = 0; t + 1 < T; ++t) {
            const Eigen::Vector3d v = (p.at(t + 1, j) - p.at(t, j)) * fps;
            acc += 0.5 * v.squaredNorm();
        }
        f.values(j) = acc / static_cast<double>(T - 1);
    }
    return f;
}

FeatureVector geometric_features(const kin::JointPositions& p, const schema::SkeletonSchema& sch,
                                 const std::vector<GeometricPredicate>& predicates) {
    const long T = p.positions.rows();
    const int up = static_cast<int>(sch.up_axis());
    FeatureVector f;
    f.kind = FeatureKind::Geometric;
    f.values = Eigen::VectorXd::Zero(static_cast<long>(predicates.size()));
    for (size_t i = 0; i < predicates.size(); ++i) {
        const auto& pr = predicates[i];
        const int ja = sch.joint_index(pr.joint_a);
        if (ja < 0) throw ConfigError("geometric_features: unknown joint '" + pr.joint_a + "'");
        int jb = -1;
        if (pr.type == GeometricPredicate::Type::PairWithin) {
            jb = sch.joint_index(pr.joint_b);
            if (jb < 0) throw ConfigError("geometric_features: unknown joint '" + pr.joint_b + "'");
        }
        long hits = 0;
        for (long t = 0; t < T; ++t) {
            bool hit = false;
            if (pr.type == GeometricPredicate::Type::JointAbove)
                hit = p.at(t, ja)[up] > pr.threshold;
            else
                hit = (p.at(t, ja) - p.at(t, jb)).norm() < pr.threshold;
            if (hit) ++hits;
        }
        f.values(static_cast<long>(i)) = static_cast<double>(hits) / static_cast<double>(T);
    }
    return f;
}

std::vector<GeometricPredicate> default_predicates() {
    using T = GeometricPredicate::Type;
    std::vector<GeometricPredicate> v;
    auto above = [&](const std::string& n, const std::string& j, double h) {
        v.push_back({n, T::JointAbove, j, "", h});
    };
    auto within = [&](const std::string& n, const std::string& a, const std::string& b, double d) {
        v.push_back({n, T::PairWithin, a, b, d});
    };
    above("l_foot_raised", "l_foot", 0.15);
    above("r_foot_raised", "r_foot", 0.15);
    above("l_foot_high", "l_foot", 0.5);
    above("r_foot_high", "r_foot", 0.5);
    above("l_wrist_over_shoulder", "l_wrist", 1.35);
    above("r_wrist_over_shoulder", "r_wrist", 1.35);
    above("l_wrist_over_head", "l_wrist", 1.6);
    above("r_wrist_over_head", "r_wrist", 1.6);
    above("head_low", "head", 1.2);
    above("pelvis_low", "pelvis", 0.7);
    within("hands_together", "l_wrist", "r_wrist", 0.30);
    within("feet_together", "l_foot", "r_foot", 0.25);
    within("l_hand_to_head", "l_wrist", "head", 0.35);
    within("r_hand_to_head", "r_wrist", "head", 0.35);
    within("l_hand_to_hip", "l_wrist", "l_hip", 0.30);
    within("r_hand_to_hip", "r_wrist", "r_hip", 0.30);
    return v;
}

std::vector<GeometricPredicate> predicates_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("predicates JSON: ") + e.what());
    }
    std::vector<GeometricPredicate> out;
    for (const auto& jp : j.value("predicates", json::array())) {
        GeometricPredicate p;
        p.name = jp.value("name", "");
        const std::string type = jp.value("type", "");
        if (type == "joint_above") {
            p.type = GeometricPredicate::Type::JointAbove;
            p.joint_a = jp.at("joint").get<std::string>();
            p.threshold = jp.at("height").get<double>();
        } else if (type == "pair_within") {
            p.type = GeometricPredicate::Type::PairWithin;
            p.joint_a = jp.at("a").get<std::string>();
            p.joint_b = jp.at("b").get<std::string>();
            p.threshold = jp.at("dist").get<double>();
        } else {
            throw ParseError("predicates JSON: unknown type '" + type + "'");
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::string predicates_to_json(const std::vector<GeometricPredicate>& preds) {
    json arr = json::array();
    for (const auto& p : preds) {
        json jp;
        jp["name"] = p.name;
        if (p.type == GeometricPredicate::Type::JointAbove) {
            jp["type"] = "joint_above";
            jp["joint"] = p.joint_a;
            jp["height"] = p.threshold;
        } else {
            jp["type"] = "pair_within";
            jp["a"] = p.joint_a;
            jp["b"] = p.joint_b;
            jp["dist"] = p.threshold;
        }
        arr.push_back(jp);
    }
    return json{{"predicates", arr}}.dump(2);
}

GaussianStats fit_gaussian(const std::vector<FeatureVector>& features) {
    if (features.size() < 2) throw InsufficientSamples("fit_gaussian: need >= 2 samples");
    const long d = features[0].values.size();
    for (const auto& f : features) {
        if (f.values.size() != d) throw DimensionError("fit_gaussian: inconsistent dimensions");
        if (f.kind != features[0].kind) throw DimensionError("fit_gaussian: mixed feature kinds");
    }
    const long n = static_cast<long>(features.size());
    GaussianStats g;
    g.n = n;
    g.mean = Eigen::VectorXd::Zero(d);
    for (const auto& f : features) g.mean += f.values;
    g.mean /= static_cast<double>(n);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
    for (const auto& f : features) {
        const Eigen::VectorXd x = f.values - g.mean;
        c += x * x.transpose();
    }
    c /= static_cast<double>(n - 1);
    g.cov = 0.5 * (c + c.transpose());
    return g;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) throw EigenFailure("sqrtm_psd: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.size() != b.mean.size())
        throw DimensionError("frechet_distance: dimension mismatch");
    const Eigen::MatrixXd sa_half = sqrtm_psd(a.cov);
    const Eigen::MatrixXd inner = sa_half * b.cov * sa_half;
    const double tr = a.cov.trace() + b.cov.trace() - 2.0 * sqrtm_psd(inner).trace();
    const double d = (a.mean - b.mean).squaredNorm() + tr;
    if (d < -1e-6) throw EigenFailure("frechet_distance: negative beyond tolerance");
    return d < 0.0 ? 0.0 : d;
}

double diversity(const std::vector<FeatureVector>& features, long pairs, uint64_t seed) {
    const long n = static_cast<long>(features.size());
    if (n < 2) throw InsufficientSamples("diversity: need >= 2 samples");
    const long all_pairs = n * (n - 1) / 2;
    double acc = 0.0;
    if (pairs >= all_pairs) {
        for (long i = 0; i < n; ++i)
            for (long j = i + 1; j < n; ++j)
                acc += (features[i].values - features[j].values).norm();
        return acc / static_cast<double>(all_pairs);
    }
    Rng rng(seed);
    for (long k = 0; k < pairs; ++k) {
        const long i = static_cast<long>(rng.below(static_cast<uint64_t>(n)));
        long j = static_cast<long>(rng.below(static_cast<uint64_t>(n - 1)));
        if (j >= i) ++j;
        acc += (features[i].values - features[j].values).norm();
    }
    return acc / static_cast<double>(pairs);
}

}  // namespace dc::eval
