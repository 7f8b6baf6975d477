#include "dc/io.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "dc/error.hpp"
#include "dc/eval.hpp"
#include "dc/kinematics.hpp"
#include "dc/rng.hpp"

namespace dc::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void put_bytes(std::string& out, const void* p, size_t n) {
    out.append(static_cast<const char*>(p), n);
}

void put_string(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.append(s);
}

struct Reader {
    std::string buf;
    size_t pos = 0;
    std::string path;

    void require(size_t n) const {
        if (pos + n > buf.size())
            throw TruncatedFile(path + ": expected " + std::to_string(pos + n) +
                                " bytes, file has " + std::to_string(buf.size()) +
                                " (short read at offset " + std::to_string(pos) + ")");
    }
    uint32_t u32() {
        require(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        require(8);
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string bytes(size_t n) {
        require(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    std::string string() {
        const uint32_t n = u32();
        return bytes(n);
    }
};

Reader read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file " + path);
    Reader r;
    r.path = path;
    r.buf.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open file for writing: " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw ConfigError("write failed: " + path);
}

std::string hash_hex(const std::array<uint8_t, 32>& h) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (uint8_t b : h) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

}  // namespace

void write_motion(const repr::MotionSequence& m, const std::string& path,
                  const schema::SkeletonSchema& sch) {
    if (m.frames.cols() != sch.native_pose_dim())
        throw DimensionError("write_motion: frames have " + std::to_string(m.frames.cols()) +
                             " dims, schema expects " + std::to_string(sch.native_pose_dim()));
    std::string out;
    out.append("DFM1");
    put_u32(out, kMotionVersion);
    put_u32(out, static_cast<uint32_t>(m.frames.rows()));
    put_u32(out, static_cast<uint32_t>(m.frames.cols()));
    put_f32(out, static_cast<float>(m.fps));
    put_u32(out, static_cast<uint32_t>(m.identity.size()));
    const auto h = sch.hash();
    put_bytes(out, h.data(), h.size());
    for (long i = 0; i < m.identity.size(); ++i)
        put_f32(out, static_cast<float>(m.identity(i)));
    for (long t = 0; t < m.frames.rows(); ++t)
        for (long d = 0; d < m.frames.cols(); ++d)
            put_f32(out, static_cast<float>(m.frames(t, d)));
    write_file(path, out);
}

repr::MotionSequence read_motion(const std::string& path, const schema::SkeletonSchema& sch,
                                 bool strict, bool* hash_mismatch) {
    Reader r = read_file(path);
    const std::string magic = r.bytes(4);
    if (magic != "DFM1") throw MagicMismatch(path + ": bad magic '" + magic + "'");
    const uint32_t version = r.u32();
    if (version != kMotionVersion)
        throw VersionUnsupported(path + ": motion file version " + std::to_string(version));
    const uint32_t T = r.u32();
    const uint32_t D = r.u32();
    const float fps = r.f32();
    const uint32_t id_dim = r.u32();
    const std::string file_hash = r.bytes(32);
    if (D != static_cast<uint32_t>(sch.native_pose_dim()))
        throw DimensionError(path + ": D=" + std::to_string(D) + ", schema expects " +
                             std::to_string(sch.native_pose_dim()));
    const auto h = sch.hash();
    const bool mismatch = std::memcmp(file_hash.data(), h.data(), 32) != 0;
    if (hash_mismatch) *hash_mismatch = mismatch;
    if (mismatch && strict) throw SchemaHashMismatch(path + ": schema hash mismatch");

    repr::MotionSequence m;
    m.schema_id = sch.name();
    m.fps = fps;
    m.identity = Eigen::VectorXd(id_dim);
    for (uint32_t i = 0; i < id_dim; ++i) m.identity(i) = r.f32();
    m.frames = Eigen::MatrixXd(T, D);
    for (uint32_t t = 0; t < T; ++t)
        for (uint32_t d = 0; d < D; ++d) m.frames(t, d) = r.f32();
    return m;
}

namespace {

json stats_json(const repr::NormStats& s) {
    auto vec = [](const Eigen::VectorXd& v) {
        std::vector<double> out(v.data(), v.data() + v.size());
        return out;
    };
    return json{{"mode", s.mode == repr::NormStats::Mode::Hybrid260 ? "hybrid260" : "zscore136"},
                {"sigma_rot", s.sigma_rot},
                {"trans_mean", vec(s.trans_mean)},
                {"trans_std", vec(s.trans_std)},
                {"frame_count", s.frame_count},
                {"mean_native", vec(s.mean_native)},
                {"std_native", vec(s.std_native)}};
}

repr::NormStats stats_from_json(const json& j) {
    auto vec = [](const json& a) {
        Eigen::VectorXd v(a.size());
        for (size_t i = 0; i < a.size(); ++i) v(static_cast<long>(i)) = a[i].get<double>();
        return v;
    };
    repr::NormStats s;
    s.mode = j.value("mode", "hybrid260") == "zscore136" ? repr::NormStats::Mode::Zscore136
                                                         : repr::NormStats::Mode::Hybrid260;
    s.sigma_rot = j.value("sigma_rot", 1.0);
    s.trans_mean = vec(j.value("trans_mean", json::array()));
    s.trans_std = vec(j.value("trans_std", json::array()));
    s.frame_count = j.value("frame_count", 0L);
    s.mean_native = vec(j.value("mean_native", json::array()));
    s.std_native = vec(j.value("std_native", json::array()));
    return s;
}

}  // namespace

std::string norm_stats_to_json(const repr::NormStats& s) { return stats_json(s).dump(2); }

repr::NormStats norm_stats_from_json(const std::string& text) {
    try {
        return stats_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw ParseError(std::string("norm stats JSON: ") + e.what());
    }
}

namespace {

void put_tensor(std::string& out, const std::string& name, const Eigen::MatrixXd& t) {
    put_string(out, name);
    put_u32(out, static_cast<uint32_t>(t.rows()));
    put_u32(out, static_cast<uint32_t>(t.cols()));
    for (long r = 0; r < t.rows(); ++r)
        for (long c = 0; c < t.cols(); ++c) put_f64(out, t(r, c));
}

}  // namespace

void write_checkpoint(const Checkpoint& c, const std::string& path,
                      const schema::SkeletonSchema& sch) {
    const model::ModelConfig& mc = c.params.config;
    json meta{{"model",
               {{"layers", mc.layers},
                {"hidden_dim", mc.hidden_dim},
                {"ffn_dim", mc.ffn_dim},
                {"heads", mc.heads},
                {"token_vocab", mc.token_vocab},
                {"l_max", mc.l_max},
                {"dropout", mc.dropout},
                {"cond_drop_prob", mc.cond_drop_prob},
                {"data_dim", mc.data_dim},
                {"identity_dim", mc.identity_dim},
                {"rope_base", mc.rope_base}}},
              {"step", c.step},
              {"mode", c.mode == flow::ReprMode::Hybrid260 ? "hybrid260" : "zscore136"},
              {"fps", c.fps},
              {"ema", c.params.ema_shadow.has_value()},
              {"stats", stats_json(c.stats)}};

    std::string out;
    out.append("DCKP");
    put_u32(out, kCheckpointVersion);
    const auto h = sch.hash();
    put_bytes(out, h.data(), h.size());
    put_string(out, meta.dump());

    uint32_t count = static_cast<uint32_t>(c.params.tensors.size()) * 3;
    if (c.params.ema_shadow) count += static_cast<uint32_t>(c.params.ema_shadow->size());
    put_u32(out, count);
    for (size_t i = 0; i < c.params.tensors.size(); ++i)
        put_tensor(out, "param:" + c.params.names[i], c.params.tensors[i]);
    for (size_t i = 0; i < c.params.tensors.size(); ++i)
        put_tensor(out, "m:" + c.params.names[i], c.opt.m[i]);
    for (size_t i = 0; i < c.params.tensors.size(); ++i)
        put_tensor(out, "v:" + c.params.names[i], c.opt.v[i]);
    if (c.params.ema_shadow)
        for (size_t i = 0; i < c.params.ema_shadow->size(); ++i)
            put_tensor(out, "ema:" + c.params.names[i], (*c.params.ema_shadow)[i]);
    write_file(path, out);
}

Checkpoint read_checkpoint(const std::string& path, const schema::SkeletonSchema& sch,
                           bool strict) {
    Reader r = read_file(path);
    const std::string magic = r.bytes(4);
    if (magic != "DCKP") throw MagicMismatch(path + ": bad magic '" + magic + "'");
    const uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw VersionUnsupported(path + ": checkpoint version " + std::to_string(version));
    const std::string file_hash = r.bytes(32);
    const auto h = sch.hash();
    if (strict && std::memcmp(file_hash.data(), h.data(), 32) != 0)
        throw SchemaHashMismatch(path + ": schema hash mismatch");

    json meta;
    try {
        meta = json::parse(r.string());
    } catch (const json::exception& e) {
        throw ParseError(path + ": checkpoint meta JSON: " + e.what());
    }
    model::ModelConfig mc;
    const json& jm = meta.at("model");
    mc.layers = jm.at("layers").get<int>();
    mc.hidden_dim = jm.at("hidden_dim").get<int>();
    mc.ffn_dim = jm.at("ffn_dim").get<int>();
    mc.heads = jm.at("heads").get<int>();
    mc.token_vocab = jm.at("token_vocab").get<int>();
    mc.l_max = jm.at("l_max").get<int>();
    mc.dropout = jm.at("dropout").get<double>();
    mc.cond_drop_prob = jm.at("cond_drop_prob").get<double>();
    mc.data_dim = jm.at("data_dim").get<int>();
    mc.identity_dim = jm.at("identity_dim").get<int>();
    mc.rope_base = jm.at("rope_base").get<double>();

    Checkpoint c;
    c.params = model::ModelParams::init(mc, 0);
    c.opt = model::AdamWState::init(c.params);
    c.step = meta.at("step").get<long>();
    c.opt.step = c.step;
    c.mode = meta.value("mode", "hybrid260") == "zscore136" ? flow::ReprMode::Zscore136
                                                            : flow::ReprMode::Hybrid260;
    c.fps = meta.value("fps", 30.0);
    c.stats = stats_from_json(meta.at("stats"));
    const bool has_ema = meta.value("ema", false);
    if (has_ema) c.params.ema_shadow = c.params.tensors;

    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = r.string();
        const uint32_t rows = r.u32();
        const uint32_t cols = r.u32();
        Eigen::MatrixXd t(rows, cols);
        for (uint32_t rr = 0; rr < rows; ++rr)
            for (uint32_t cc = 0; cc < cols; ++cc) t(rr, cc) = r.f64();
        const size_t sep = name.find(':');
        if (sep == std::string::npos)
            throw ParseError(path + ": tensor name without section: " + name);
        const std::string section = name.substr(0, sep);
        const int idx = c.params.index_of(name.substr(sep + 1));
        const Eigen::MatrixXd& ref = c.params.tensors[static_cast<size_t>(idx)];
        if (t.rows() != ref.rows() || t.cols() != ref.cols())
            throw ShapeError(path + ": tensor " + name + " shape mismatch");
        if (section == "param")
            c.params.tensors[static_cast<size_t>(idx)] = std::move(t);
        else if (section == "m")
            c.opt.m[static_cast<size_t>(idx)] = std::move(t);
        else if (section == "v")
            c.opt.v[static_cast<size_t>(idx)] = std::move(t);
        else if (section == "ema")
            (*c.params.ema_shadow)[static_cast<size_t>(idx)] = std::move(t);
        else
            throw ParseError(path + ": unknown tensor section: " + section);
    }
    return c;
}

schema::SkeletonSchema resolve_schema(const std::string& name_or_path) {
    if (name_or_path.empty() || name_or_path == "mhr260") return schema::mhr260();
    if (fs::exists(name_or_path)) return schema::SkeletonSchema::load_file(name_or_path);
    if (const char* dir = std::getenv("CHOREOFLOW_SCHEMA_DIR")) {
        const fs::path p = fs::path(dir) / name_or_path;
        if (fs::exists(p)) return schema::SkeletonSchema::load_file(p.string());
        const fs::path pd = fs::path(dir) / (name_or_path + ".dcs");
        if (fs::exists(pd)) return schema::SkeletonSchema::load_file(pd.string());
    }
    throw ConfigError("schema not found: " + name_or_path);
}

choreo::ChoreoAnnotation class_annotation(int label) {
    choreo::ChoreoAnnotation a;
    choreo::ChoreoPhrase p;
    choreo::SpaceSpec s;
    if (label == 0) {
        p.body["left_arm"] = "raise";
        p.body["right_arm"] = "raise";
        s.plane = "sagittal";
        s.direction = "up";
        s.level = "high";
    } else if (label == 1) {
        p.body["left_leg"] = "lift";
        p.body["right_leg"] = "lift";
        s.plane = "sagittal";
        s.direction = "up";
        s.level = "low";
    } else {
        throw ConfigError("class_annotation: label must be 0 or 1");
    }
    p.space = s;
    a.phrases.push_back(std::move(p));
    return a;
}

namespace {

repr::MotionSequence synth_motion(const schema::SkeletonSchema& sch, int label, long frames,
                                  double fps, Rng& rng) {
    repr::MotionSequence m;
    m.schema_id = sch.name();
    m.fps = fps;
    m.frames = Eigen::MatrixXd::Zero(frames, sch.native_pose_dim());
    m.identity = Eigen::VectorXd::Zero(68);

    const auto& root_trans = sch.dim_layout().native.root_translation;
    const int up_col = root_trans[static_cast<size_t>(sch.up_axis())];
    const double amp_jitter = 1.0 + 0.2 * (rng.uniform() - 0.5);
    const double phase = rng.uniform() * 2.0 * M_PI;
    const double cycles = 2.0;

    for (long t = 0; t < frames; ++t) {
        m.frames(t, up_col) = 0.95;
        const double u = 2.0 * M_PI * cycles * static_cast<double>(t) /
                         static_cast<double>(frames);
        if (label == 0) {
            // arm raise: shoulder rotation about z lifts the laterally
            // extended arms
            const double theta = 1.8 * amp_jitter * 0.5 * (1.0 - std::cos(u + phase));
            const int lj = sch.joint_index("l_shoulder");
            const int rj = sch.joint_index("r_shoulder");
            m.frames(t, sch.native_offset(lj) + 2) = -theta;
            m.frames(t, sch.native_offset(rj) + 2) = theta;
        } else {
            // leg lift: hip rotation about x swings the legs forward and up,
            // alternating sides
            const double tl = 2.0 * amp_jitter * 0.5 * (1.0 - std::cos(u + phase));
            const double tr = 2.0 * amp_jitter * 0.5 * (1.0 - std::cos(u + phase + M_PI));
            const int lj = sch.joint_index("l_hip");
            const int rj = sch.joint_index("r_hip");
            m.frames(t, sch.native_offset(lj)) = -tl;
            m.frames(t, sch.native_offset(rj)) = -tr;
        }
    }
    return m;
}

}  // namespace

SynthResult synth_dataset(const SynthConfig& cfg, const schema::SkeletonSchema& sch) {
    if (cfg.per_class < 2) throw ConfigError("synth_dataset: per_class must be >= 2");
    if (cfg.frames < 2) throw ConfigError("synth_dataset: frames must be >= 2");
    if (cfg.out_dir.empty()) throw ConfigError("synth_dataset: out_dir required");

    std::vector<repr::MotionSequence> motions;
    double separation = 0.0;
    uint64_t seed_used = cfg.seed;
    bool ok = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !ok; ++attempt) {
        seed_used = cfg.seed + 1000003ULL * static_cast<uint64_t>(attempt);
        Rng rng(seed_used);
        motions.clear();
        for (int label = 0; label < 2; ++label)
            for (int i = 0; i < cfg.per_class; ++i)
                motions.push_back(synth_motion(sch, label, cfg.frames, cfg.fps, rng));

        std::vector<Eigen::VectorXd> feats;
        feats.reserve(motions.size());
        for (const auto& m : motions) {
            const kin::JointPositions p = kin::forward_kinematics(m, sch);
            feats.push_back(eval::kinetic_features(p, m.fps).values);
        }
        Eigen::VectorXd ca = Eigen::VectorXd::Zero(feats[0].size());
        Eigen::VectorXd cb = ca;
        for (int i = 0; i < cfg.per_class; ++i) ca += feats[static_cast<size_t>(i)];
        for (int i = 0; i < cfg.per_class; ++i)
            cb += feats[static_cast<size_t>(cfg.per_class + i)];
        ca /= cfg.per_class;
        cb /= cfg.per_class;
        double va = 0.0, vb = 0.0;
        for (int i = 0; i < cfg.per_class; ++i) {
            va += (feats[static_cast<size_t>(i)] - ca).squaredNorm();
            vb += (feats[static_cast<size_t>(cfg.per_class + i)] - cb).squaredNorm();
        }
        const double sa = std::sqrt(va / cfg.per_class);
        const double sb = std::sqrt(vb / cfg.per_class);
        separation = (ca - cb).norm() / std::max({sa, sb, 1e-12});
        ok = separation >= cfg.min_separation;
    }
    if (!ok)
        throw ConfigError("synth_dataset: separation constraint unmet after " +
                          std::to_string(cfg.max_attempts) + " attempts (got " +
                          std::to_string(separation) + ")");

    fs::create_directories(cfg.out_dir);
    json items = json::array();
    SynthResult res;
    for (size_t i = 0; i < motions.size(); ++i) {
        const int label = static_cast<int>(i) < cfg.per_class ? 0 : 1;
        char mbuf[32], abuf[32];
        std::snprintf(mbuf, sizeof mbuf, "motion_%04zu.dfm", i);
        std::snprintf(abuf, sizeof abuf, "annotation_%04zu.json", i);
        const std::string mpath = (fs::path(cfg.out_dir) / mbuf).string();
        const std::string apath = (fs::path(cfg.out_dir) / abuf).string();
        write_motion(motions[i], mpath, sch);
        std::ofstream af(apath);
        af << choreo::annotation_to_json(class_annotation(label));
        if (!af) throw ConfigError("cannot write " + apath);
        items.push_back({{"motion", mbuf}, {"annotation", abuf}, {"label", label}});
        ++res.motion_files;
        ++res.annotation_files;
    }
    json manifest{{"items", items},
                  {"fps", cfg.fps},
                  {"frames", cfg.frames},
                  {"seed", seed_used},
                  {"separation", separation},
                  {"schema", sch.name()},
                  {"schema_hash", hash_hex(sch.hash())}};
    std::ofstream mf(fs::path(cfg.out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    if (!mf) throw ConfigError("cannot write manifest in " + cfg.out_dir);
    res.separation = separation;
    res.seed_used = seed_used;
    return res;
}

std::vector<CorpusItem> read_manifest(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw ConfigError("cannot open manifest in " + dir);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("manifest.json: ") + e.what());
    }
    std::vector<CorpusItem> out;
    for (const auto& it : j.at("items")) {
        CorpusItem c;
        c.motion_path = (fs::path(dir) / it.at("motion").get<std::string>()).string();
        c.annotation_path = (fs::path(dir) / it.at("annotation").get<std::string>()).string();
        c.label = it.at("label").get<int>();
        out.push_back(std::move(c));
    }
    return out;
}

LoadedCorpus load_corpus(const std::string& dir, const schema::SkeletonSchema& sch,
                         flow::ReprMode mode, int l_max) {
    const std::vector<CorpusItem> manifest = read_manifest(dir);
    if (manifest.empty()) throw EmptyDataset("load_corpus: empty manifest in " + dir);

    LoadedCorpus out;
    std::vector<repr::MotionSequence> motions;
    motions.reserve(manifest.size());
    for (const auto& it : manifest) {
        motions.push_back(read_motion(it.motion_path, sch, true));
        out.labels.push_back(it.label);
    }
    out.fps = motions[0].fps;

    const choreo::Vocabulary vocab;
    std::vector<std::vector<int>> tokens;
    tokens.reserve(manifest.size());
    for (const auto& it : manifest) {
        std::ifstream af(it.annotation_path);
        if (!af) throw ConfigError("cannot open " + it.annotation_path);
        std::string text((std::istreambuf_iterator<char>(af)),
                         std::istreambuf_iterator<char>());
        tokens.push_back(
            choreo::extract_tokens(choreo::annotation_from_json(text), vocab, l_max));
    }

    if (mode == flow::ReprMode::Hybrid260) {
        std::vector<repr::ContinuousMotion> cont;
        cont.reserve(motions.size());
        for (const auto& m : motions) cont.push_back(repr::encode_sequence(m, sch));
        out.stats = repr::fit_norm_stats(cont, sch);
        for (size_t i = 0; i < motions.size(); ++i) {
            flow::TrainItem item;
            item.x0_bar = repr::normalize(cont[i], out.stats).frames;
            item.tokens = tokens[i];
            item.identity = motions[i].identity;
            item.gt_positions = kin::forward_kinematics(motions[i], sch);
            item.contacts = kin::detect_contacts(item.gt_positions, sch);
            out.items.push_back(std::move(item));
        }
    } else {
        out.stats = repr::fit_zscore136(motions, sch);
        for (size_t i = 0; i < motions.size(); ++i) {
            flow::TrainItem item;
            item.x0_bar = repr::normalize_native(motions[i].frames, out.stats);
            item.tokens = tokens[i];
            item.identity = motions[i].identity;
            item.gt_positions = kin::forward_kinematics(motions[i], sch);
            item.contacts = kin::detect_contacts(item.gt_positions, sch);
            out.items.push_back(std::move(item));
        }
    }
    return out;
}

}  // namespace dc::io
