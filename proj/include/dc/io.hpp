#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dc/choreo.hpp"
#include "dc/flow.hpp"
#include "dc/model.hpp"
#include "dc/repr.hpp"
#include "dc/schema.hpp"

namespace dc::io {

// --- motion files ---
// Layout (all integers little-endian):
//   magic "DFM1", version u32, T u32, D u32, fps f32, identity_dim u32,
//   schema_hash 32 bytes, identity f32[identity_dim], frames f32[T*D]
// row-major. D is the schema's native pose dim.
inline constexpr uint32_t kMotionVersion = 1;

void write_motion(const repr::MotionSequence& m, const std::string& path,
                  const schema::SkeletonSchema& sch);

// strict=false downgrades a schema-hash mismatch to *hash_mismatch.
repr::MotionSequence read_motion(const std::string& path, const schema::SkeletonSchema& sch,
                                 bool strict = false, bool* hash_mismatch = nullptr);

// --- checkpoints ---
// Layout: magic "DCKP", version u32, schema_hash 32 bytes, meta-JSON
// (u32 length + bytes), tensor count u32, then per tensor: name
// (u32 length + bytes), rows u32, cols u32, f64 payload. Tensor names carry
// a section prefix: param:/m:/v:/ema:.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    model::ModelParams params;
    model::AdamWState opt;
    long step = 0;
    repr::NormStats stats;
    flow::ReprMode mode = flow::ReprMode::Hybrid260;
    double fps = 30.0;
};

void write_checkpoint(const Checkpoint& c, const std::string& path,
                      const schema::SkeletonSchema& sch);
Checkpoint read_checkpoint(const std::string& path, const schema::SkeletonSchema& sch,
                           bool strict = true);

std::string norm_stats_to_json(const repr::NormStats& s);
repr::NormStats norm_stats_from_json(const std::string& text);

// --- schema resolution ---
// "mhr260" resolves to the builtin; anything else is treated as a file path,
// searched relative to CHOREOFLOW_SCHEMA_DIR when not found directly.
schema::SkeletonSchema resolve_schema(const std::string& name_or_path);

// --- synthetic corpus ---

struct SynthConfig {
    int per_class = 100;
    long frames = 32;
    double fps = 20.0;
    uint64_t seed = 7;
    std::string out_dir;
    double min_separation = 5.0;  // centroid distance over within-class std
    int max_attempts = 10;
};

struct SynthResult {
    int motion_files = 0;
    int annotation_files = 0;
    double separation = 0.0;
    uint64_t seed_used = 0;
};

// Two procedural classes: A oscillates the shoulders (arm raise), B the hips
// (leg lift). Each motion ships with a matching annotation; the corpus is
// regenerated with a derived seed until the kinetic-feature separation
// constraint holds.
SynthResult synth_dataset(const SynthConfig& cfg, const schema::SkeletonSchema& sch);

// Manifest entry of one corpus item.
struct CorpusItem {
    std::string motion_path;
    std::string annotation_path;
    int label = 0;
};

std::vector<CorpusItem> read_manifest(const std::string& dir);

// Corpus directory -> ready-to-train items: motions encoded and normalized,
// annotations tokenized, FK supervision precomputed.
struct LoadedCorpus {
    std::vector<flow::TrainItem> items;
    std::vector<int> labels;
    repr::NormStats stats;
    double fps = 30.0;
};

LoadedCorpus load_corpus(const std::string& dir, const schema::SkeletonSchema& sch,
                         flow::ReprMode mode, int l_max = 256);

// The two class annotations used by the corpus and the controllability probe.
choreo::ChoreoAnnotation class_annotation(int label);

}  // namespace dc::io
