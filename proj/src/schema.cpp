#include "dc/schema.hpp"

#include <openssl/sha.h>

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "dc/error.hpp"

namespace dc::schema {

const char* to_string(JointGroup g) {
    switch (g) {
        case JointGroup::Global: return "global";
        case JointGroup::Body: return "body";
        case JointGroup::Hand: return "hand";
        case JointGroup::Jaw: return "jaw";
    }
    return "?";
}

const char* to_string(Axis a) {
    switch (a) {
        case Axis::X: return "X";
        case Axis::Y: return "Y";
        case Axis::Z: return "Z";
    }
    return "?";
}

RotationOrder RotationOrder::parse(const std::string& s) {
    if (s.size() != 3) throw ParseError("rotation order must be 3 letters, got '" + s + "'");
    RotationOrder o;
    bool seen[3] = {false, false, false};
    for (int i = 0; i < 3; ++i) {
        char c = static_cast<char>(std::toupper(s[i]));
        int ax = c == 'X' ? 0 : c == 'Y' ? 1 : c == 'Z' ? 2 : -1;
        if (ax < 0 || seen[ax])
            throw ParseError("rotation order must be a permutation of XYZ, got '" + s + "'");
        seen[ax] = true;
        o.axes[i] = static_cast<Axis>(ax);
    }
    return o;
}

std::string RotationOrder::str() const {
    std::string s;
    for (Axis a : axes) s += to_string(a);
    return s;
}

namespace {

JointGroup parse_group(const std::string& s, int line) {
    if (s == "global") return JointGroup::Global;
    if (s == "body") return JointGroup::Body;
    if (s == "hand") return JointGroup::Hand;
    if (s == "jaw") return JointGroup::Jaw;
    throw ParseError("line " + std::to_string(line) + ": unknown group '" + s + "'");
}

Eigen::Vector3d parse_vec3(const std::string& s, int line, const std::string& field) {
    Eigen::Vector3d v;
    std::string t = s;
    for (char& c : t)
        if (c == ',') c = ' ';
    std::istringstream is(t);
    if (!(is >> v.x() >> v.y() >> v.z()))
        throw ParseError("line " + std::to_string(line) + ": field '" + field +
                         "' expects three numbers, got '" + s + "'");
    return v;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::string fmt_num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

SkeletonSchema SkeletonSchema::load(const std::string& document) {
    SkeletonSchema sch;
    bool saw_version = false;
    std::optional<int> decl_native, decl_continuous;
    std::vector<std::string> foot_names;
    std::vector<std::string> parent_names;

    std::istringstream in(document);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        auto toks = split_ws(line);
        if (toks.empty()) continue;
        const std::string& kw = toks[0];
        if (kw == "version") {
            if (toks.size() != 2 || toks[1] != "1")
                throw ParseError("line " + std::to_string(lineno) + ": expected 'version 1'");
            saw_version = true;
        } else if (kw == "name") {
            if (toks.size() != 2) throw ParseError("line " + std::to_string(lineno) + ": 'name' takes one token");
            sch.name_ = toks[1];
        } else if (kw == "up") {
            if (toks.size() != 2 || toks[1].size() != 1)
                throw ParseError("line " + std::to_string(lineno) + ": 'up' takes one axis letter");
            char c = static_cast<char>(std::toupper(toks[1][0]));
            if (c == 'X') sch.up_axis_ = Axis::X;
            else if (c == 'Y') sch.up_axis_ = Axis::Y;
            else if (c == 'Z') sch.up_axis_ = Axis::Z;
            else throw ParseError("line " + std::to_string(lineno) + ": bad up axis '" + toks[1] + "'");
        } else if (kw == "feet") {
            foot_names.assign(toks.begin() + 1, toks.end());
        } else if (kw == "dims") {
            for (size_t i = 1; i < toks.size(); ++i) {
                auto eq = toks[i].find('=');
                if (eq == std::string::npos)
                    throw ParseError("line " + std::to_string(lineno) + ": 'dims' entries are key=value");
                std::string k = toks[i].substr(0, eq), v = toks[i].substr(eq + 1);
                if (k == "native") decl_native = std::stoi(v);
                else if (k == "continuous") decl_continuous = std::stoi(v);
                else throw ParseError("line " + std::to_string(lineno) + ": unknown dims key '" + k + "'");
            }
        } else if (kw == "joint") {
            JointSpec j;
            std::string parent_name;
            bool has_name = false, has_parent = false, has_offset = false, has_dof = false,
                 has_order = false, has_axis = false, has_group = false;
            for (size_t i = 1; i < toks.size(); ++i) {
                auto eq = toks[i].find('=');
                if (eq == std::string::npos)
                    throw ParseError("line " + std::to_string(lineno) +
                                     ": joint attributes are key=value, got '" + toks[i] + "'");
                std::string k = toks[i].substr(0, eq), v = toks[i].substr(eq + 1);
                if (k == "name") { j.name = v; has_name = true; }
                else if (k == "parent") { parent_name = v; has_parent = true; }
                else if (k == "offset") { j.offset = parse_vec3(v, lineno, "offset"); has_offset = true; }
                else if (k == "dof") {
                    j.dof = std::stoi(v);
                    if (j.dof != 1 && j.dof != 3)
                        throw ParseError("line " + std::to_string(lineno) + ": dof must be 1 or 3");
                    has_dof = true;
                } else if (k == "order") { j.order = RotationOrder::parse(v); has_order = true; }
                else if (k == "axis") { j.axis = parse_vec3(v, lineno, "axis"); has_axis = true; }
                else if (k == "group") { j.group = parse_group(v, lineno); has_group = true; }
                else throw ParseError("line " + std::to_string(lineno) + ": unknown joint key '" + k + "'");
            }
            if (!has_name || !has_parent || !has_offset || !has_dof || !has_group)
                throw ParseError("line " + std::to_string(lineno) +
                                 ": joint needs name, parent, offset, dof, group");
            if (j.dof == 3 && !has_order)
                throw ParseError("line " + std::to_string(lineno) + ": 3-DoF joint needs order=");
            if (j.dof == 1) {
                if (!has_axis)
                    throw ParseError("line " + std::to_string(lineno) + ": 1-DoF joint needs axis=");
                const double n = j.axis.norm();
                if (n < 1e-12)
                    throw ParseError("line " + std::to_string(lineno) + ": zero 1-DoF axis");
                j.axis /= n;
            }
            for (const auto& existing : sch.joints_)
                if (existing.name == j.name)
                    throw ParseError("line " + std::to_string(lineno) + ": duplicate joint '" + j.name + "'");
            sch.joints_.push_back(j);
            parent_names.push_back(parent_name);
        } else {
            throw ParseError("line " + std::to_string(lineno) + ": unknown directive '" + kw + "'");
        }
    }
    if (!saw_version) throw ParseError("missing mandatory 'version' line");
    if (sch.joints_.empty()) throw ParseError("schema declares no joints");

    // Resolve parents.
    int root_count = 0;
    for (size_t i = 0; i < sch.joints_.size(); ++i) {
        if (parent_names[i] == "none") {
            sch.joints_[i].parent = -1;
            ++root_count;
        } else {
            int p = -1;
            for (size_t k = 0; k < sch.joints_.size(); ++k)
                if (sch.joints_[k].name == parent_names[i]) { p = static_cast<int>(k); break; }
            if (p < 0)
                throw TopologyError("joint '" + sch.joints_[i].name + "' references unknown parent '" +
                                    parent_names[i] + "'");
            sch.joints_[i].parent = p;
        }
    }
    if (root_count == 0) throw TopologyError("no root joint (parent=none)");
    if (root_count > 1) throw TopologyError("multiple root joints");

    // Cycle / reachability check by walking parent chains.
    const int n = static_cast<int>(sch.joints_.size());
    for (int i = 0; i < n; ++i) {
        int steps = 0, cur = i;
        while (cur != -1) {
            cur = sch.joints_[cur].parent;
            if (++steps > n)
                throw TopologyError("cycle through joint '" + sch.joints_[i].name + "'");
        }
    }

    for (const auto& fn : foot_names) {
        int idx = -1;
        for (int i = 0; i < n; ++i)
            if (sch.joints_[i].name == fn) { idx = i; break; }
        if (idx < 0) throw TopologyError("feet list references unknown joint '" + fn + "'");
        sch.foot_joints_.push_back(idx);
    }

    sch.finalize(decl_native, decl_continuous);
    return sch;
}

SkeletonSchema SkeletonSchema::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open schema file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return load(os.str());
}

void SkeletonSchema::finalize(std::optional<int> declared_native, std::optional<int> declared_continuous) {
    const int n = static_cast<int>(joints_.size());
    native_off_.assign(n, 0);
    cont_off_.assign(n, -1);
    int native = root_channels, cont = root_channels, active = 0, jaw = 0;
    for (int i = 0; i < n; ++i) {
        const auto& j = joints_[i];
        native_off_[i] = native;
        native += j.dof;
        if (j.group == JointGroup::Jaw) {
            jaw += j.dof;
        } else {
            cont_off_[i] = cont;
            cont += j.dof == 3 ? 6 : 2;
            active += j.dof;
        }
    }
    native_pose_dim_ = native;
    continuous_dim_ = cont;
    active_rotation_dim_ = active;
    jaw_dofs_ = jaw;
    if (declared_native && *declared_native != native)
        throw DimensionError("declared native dim " + std::to_string(*declared_native) +
                             " but joint list yields " + std::to_string(native));
    if (declared_continuous && *declared_continuous != cont)
        throw DimensionError("declared continuous dim " + std::to_string(*declared_continuous) +
                             " but joint list yields " + std::to_string(cont));

    // Topological order: repeatedly emit joints whose parent is emitted.
    topo_order_.clear();
    std::vector<bool> emitted(n, false);
    while (static_cast<int>(topo_order_.size()) < n) {
        bool progress = false;
        for (int i = 0; i < n; ++i) {
            if (emitted[i]) continue;
            int p = joints_[i].parent;
            if (p == -1 || emitted[p]) {
                topo_order_.push_back(i);
                emitted[i] = true;
                progress = true;
            }
        }
        if (!progress) throw TopologyError("unreachable joints");  // unreachable after cycle check
    }
}

int SkeletonSchema::joint_index(const std::string& name) const {
    for (size_t i = 0; i < joints_.size(); ++i)
        if (joints_[i].name == name) return static_cast<int>(i);
    return -1;
}

DimLayout SkeletonSchema::dim_layout() const {
    DimLayout l;
    for (int d = 0; d < root_channels; ++d) {
        l.native.root_translation.push_back(d);
        l.continuous.root_translation.push_back(d);
    }
    auto pick = [](SpaceLayout& s, JointGroup g) -> std::vector<int>& {
        switch (g) {
            case JointGroup::Global: return s.global_rotation;
            case JointGroup::Hand: return s.hand_rotation;
            case JointGroup::Jaw: return s.jaw_rotation;
            default: return s.body_rotation;
        }
    };
    for (size_t i = 0; i < joints_.size(); ++i) {
        const auto& j = joints_[i];
        auto& nat = pick(l.native, j.group);
        for (int d = 0; d < j.dof; ++d) nat.push_back(native_off_[i] + d);
        if (j.group != JointGroup::Jaw) {
            auto& con = pick(l.continuous, j.group);
            const int w = j.dof == 3 ? 6 : 2;
            for (int d = 0; d < w; ++d) con.push_back(cont_off_[i] + d);
        }
    }
    return l;
}

std::string SkeletonSchema::canonical_text() const {
    std::ostringstream os;
    os << "version 1\n";
    os << "name " << name_ << "\n";
    os << "up " << to_string(up_axis_) << "\n";
    if (!foot_joints_.empty()) {
        os << "feet";
        for (int f : foot_joints_) os << " " << joints_[f].name;
        os << "\n";
    }
    os << "dims native=" << native_pose_dim_ << " continuous=" << continuous_dim_ << "\n";
    for (const auto& j : joints_) {
        os << "joint name=" << j.name << " parent=" << (j.parent < 0 ? "none" : joints_[j.parent].name)
           << " offset=" << fmt_num(j.offset.x()) << "," << fmt_num(j.offset.y()) << ","
           << fmt_num(j.offset.z()) << " dof=" << j.dof;
        if (j.dof == 3)
            os << " order=" << j.order.str();
        else
            os << " axis=" << fmt_num(j.axis.x()) << "," << fmt_num(j.axis.y()) << ","
               << fmt_num(j.axis.z());
        os << " group=" << to_string(j.group) << "\n";
    }
    return os.str();
}

std::array<uint8_t, 32> SkeletonSchema::hash() const {
    const std::string text = canonical_text();
    std::array<uint8_t, 32> out{};
    SHA256(reinterpret_cast<const unsigned char*>(text.data()), text.size(), out.data());
    return out;
}

namespace {

std::string build_mhr260_document() {
    std::ostringstream os;
    os << "version 1\nname mhr260\nup Y\nfeet l_foot r_foot\n";
    os << "dims native=136 continuous=260\n";
    auto j3 = [&](const std::string& n, const std::string& p, double x, double y, double z,
                  const std::string& g) {
        os << "joint name=" << n << " parent=" << p << " offset=" << x << "," << y << "," << z
           << " dof=3 order=XYZ group=" << g << "\n";
    };
    auto j1 = [&](const std::string& n, const std::string& p, double x, double y, double z,
                  const std::string& ax, const std::string& g) {
        os << "joint name=" << n << " parent=" << p << " offset=" << x << "," << y << "," << z
           << " dof=1 axis=" << ax << " group=" << g << "\n";
    };
    // Root translation channels carry the pelvis height; the root offset is
    // not applied by FK.
    j3("pelvis", "none", 0, 0, 0, "global");
    j3("spine1", "pelvis", 0, 0.10, 0, "body");
    j3("spine2", "spine1", 0, 0.12, 0, "body");
    j3("spine3", "spine2", 0, 0.12, 0, "body");
    j3("chest", "spine3", 0, 0.12, 0, "body");
    j3("neck", "chest", 0, 0.12, 0, "body");
    j3("head", "neck", 0, 0.10, 0, "body");
    j3("jaw", "head", 0, -0.02, 0.06, "jaw");
    for (int side = 0; side < 2; ++side) {
        const double s = side == 0 ? 1.0 : -1.0;
        const std::string pre = side == 0 ? "l_" : "r_";
        j3(pre + "clavicle", "chest", s * 0.04, 0.10, 0, "body");
        j3(pre + "shoulder", pre + "clavicle", s * 0.14, 0, 0, "body");
        j1(pre + "elbow", pre + "shoulder", s * 0.28, 0, 0, "0,0,1", "body");
        j3(pre + "wrist", pre + "elbow", s * 0.26, 0, 0, "body");
        j3(pre + "thumb1", pre + "wrist", s * 0.03, -0.01, 0.03, "hand");
        j3(pre + "thumb2", pre + "thumb1", s * 0.035, 0, 0.01, "hand");
        j1(pre + "thumb3", pre + "thumb2", s * 0.03, 0, 0, "0,0,1", "hand");
        j3(pre + "index1", pre + "wrist", s * 0.09, 0, 0.025, "hand");
        j3(pre + "index2", pre + "index1", s * 0.035, 0, 0, "hand");
        j1(pre + "index3", pre + "index2", s * 0.025, 0, 0, "0,0,1", "hand");
        j3(pre + "middle1", pre + "wrist", s * 0.095, 0, 0.008, "hand");
        j3(pre + "middle2", pre + "middle1", s * 0.04, 0, 0, "hand");
        j1(pre + "middle3", pre + "middle2", s * 0.028, 0, 0, "0,0,1", "hand");
        j3(pre + "ring1", pre + "wrist", s * 0.09, 0, -0.01, "hand");
        j3(pre + "ring2", pre + "ring1", s * 0.035, 0, 0, "hand");
        j1(pre + "ring3", pre + "ring2", s * 0.025, 0, 0, "0,0,1", "hand");
        j3(pre + "pinky1", pre + "wrist", s * 0.085, 0, -0.028, "hand");
        j1(pre + "pinky3", pre + "pinky1", s * 0.03, 0, 0, "0,0,1", "hand");
    }
    for (int side = 0; side < 2; ++side) {
        const double s = side == 0 ? 1.0 : -1.0;
        const std::string pre = side == 0 ? "l_" : "r_";
        j3(pre + "hip", "pelvis", s * 0.09, -0.05, 0, "body");
        j1(pre + "knee", pre + "hip", 0, -0.42, 0, "1,0,0", "body");
        j3(pre + "ankle", pre + "knee", 0, -0.40, 0, "body");
        j3(pre + "foot", pre + "ankle", 0, -0.06, 0.10, "body");
        j1(pre + "toe", pre + "foot", 0, 0, 0.08, "1,0,0", "body");
    }
    return os.str();
}

}  // namespace

const SkeletonSchema& mhr260() {
    static const SkeletonSchema sch = SkeletonSchema::load(build_mhr260_document());
    return sch;
}

SkeletonSchema minimal_two_joint(JointGroup child_group) {
    std::ostringstream os;
    os << "version 1\nname minimal2\nup Y\n";
    os << "joint name=root parent=none offset=0,1,0 dof=3 order=XYZ group=global\n";
    os << "joint name=child parent=root offset=0,0.5,0 dof=1 axis=0,0,1 group="
       << to_string(child_group) << "\n";
    return SkeletonSchema::load(os.str());
}

}  // namespace dc::schema
