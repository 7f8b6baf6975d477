#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dc::schema {

enum class Axis { X = 0, Y = 1, Z = 2 };

enum class JointGroup { Global, Body, Hand, Jaw };

const char* to_string(JointGroup g);
const char* to_string(Axis a);

// Intrinsic rotation order, a permutation of {X, Y, Z}.
struct RotationOrder {
    std::array<Axis, 3> axes{Axis::X, Axis::Y, Axis::Z};

    static RotationOrder parse(const std::string& s);  // throws ParseError
    std::string str() const;
    bool operator==(const RotationOrder&) const = default;
};

struct JointSpec {
    std::string name;
    int parent = -1;  // index into the joint list; -1 for the root
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
    int dof = 3;  // 1 or 3
    RotationOrder order;
    Eigen::Vector3d axis = Eigen::Vector3d::UnitX();  // 1-DoF joints only
    JointGroup group = JointGroup::Body;
};

// Index sets for one representation space. Sets are pairwise disjoint and
// together cover [0, dim) of that space.
struct SpaceLayout {
    std::vector<int> root_translation;
    std::vector<int> global_rotation;
    std::vector<int> body_rotation;
    std::vector<int> hand_rotation;
    std::vector<int> jaw_rotation;  // empty in continuous space
};

struct DimLayout {
    SpaceLayout native;
    SpaceLayout continuous;
};

class SkeletonSchema {
public:
    // Parses and validates a schema document. Throws ParseError,
    // TopologyError or DimensionError.
    static SkeletonSchema load(const std::string& document);
    static SkeletonSchema load_file(const std::string& path);

    const std::string& name() const { return name_; }
    Axis up_axis() const { return up_axis_; }
    const std::vector<JointSpec>& joints() const { return joints_; }
    const std::vector<int>& foot_joints() const { return foot_joints_; }

    int native_pose_dim() const { return native_pose_dim_; }
    int active_rotation_dim() const { return active_rotation_dim_; }
    int continuous_dim() const { return continuous_dim_; }
    int jaw_dofs() const { return jaw_dofs_; }
    static constexpr int root_channels = 6;

    // Column of joint j's first rotation channel in native space.
    int native_offset(int j) const { return native_off_[j]; }
    // Same in continuous space; -1 for jaw joints (excluded there).
    int continuous_offset(int j) const { return cont_off_[j]; }
    int joint_index(const std::string& name) const;  // -1 if absent

    // Parent-before-child ordering, root first.
    const std::vector<int>& topological_order() const { return topo_order_; }

    DimLayout dim_layout() const;

    // Deterministic serialization; identical schemas produce identical text.
    std::string canonical_text() const;
    std::array<uint8_t, 32> hash() const;  // SHA-256 of canonical_text()

private:
    std::string name_;
    Axis up_axis_ = Axis::Y;
    std::vector<JointSpec> joints_;
    std::vector<int> foot_joints_;
    int native_pose_dim_ = 0;
    int active_rotation_dim_ = 0;
    int continuous_dim_ = 0;
    int jaw_dofs_ = 0;
    std::vector<int> native_off_;
    std::vector<int> cont_off_;
    std::vector<int> topo_order_;

    void finalize(std::optional<int> declared_native, std::optional<int> declared_continuous);
};

// The default 136/260 humanoid rig shipped with the project.
const SkeletonSchema& mhr260();

// Two-joint chain used throughout the tests: 3-DoF root plus one 1-DoF child.
SkeletonSchema minimal_two_joint(JointGroup child_group = JointGroup::Body);

}  // namespace dc::schema
