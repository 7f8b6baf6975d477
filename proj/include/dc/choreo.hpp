#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dc::choreo {

// Fixed anatomical segment order; slot positions in the token layout depend
// on this order.
const std::vector<std::string>& segments();
const std::vector<std::string>& planes();       // transverse, sagittal, coronal
const std::vector<std::string>& directions();   // up down left right forward backward
const std::vector<std::string>& levels();       // low middle high
const std::vector<std::string>& effort_polarities();  // light strong direct indirect sudden sustained free bound

struct SpaceSpec {
    std::string plane;
    std::string direction;
    std::string level;
};

struct EffortSpec {
    std::string weight;   // light | strong
    std::string space_q;  // direct | indirect
    std::string time;     // sudden | sustained
    std::string flow;     // free | bound
};

struct ChoreoPhrase {
    std::map<std::string, std::string> body;  // segment -> movement term
    std::optional<SpaceSpec> space;
    std::optional<int> orientation;  // clock direction 1..8
    std::optional<EffortSpec> effort;
};

struct ChoreoAnnotation {
    std::vector<ChoreoPhrase> phrases;
    std::optional<std::string> free_text;
    int word_count = 0;
};

struct Diagnostic {
    int phrase = -1;  // -1 for annotation-level issues
    std::string field;
    std::string token;
    std::string message;
};

// Movement-term vocabulary; extensible so corrections land without code
// changes. `extra` terms are appended after the built-in list.
class Vocabulary {
public:
    explicit Vocabulary(std::vector<std::string> extra_terms = {});

    const std::vector<std::string>& movement_terms() const { return terms_; }
    bool has_term(const std::string& t) const;

    // token id layout
    static constexpr int kNone = 0;
    static constexpr int kPhrase = 1;
    int term_token(const std::string& t) const;  // -1 if unknown
    int plane_token(const std::string& p) const;
    int direction_token(const std::string& d) const;
    int level_token(const std::string& l) const;
    int clock_token(int clock) const;  // 1..8
    int effort_token(const std::string& p) const;
    int free_text_token(const std::string& word) const;  // hashed bucket
    int vocab_size() const;

    static constexpr int kFreeTextBuckets = 4096;
    static constexpr int kSlotsPerPhrase = 17;

private:
    std::vector<std::string> terms_;
    int term_base_, plane_base_, dir_base_, level_base_, clock_base_, effort_base_, free_base_;
};

std::vector<Diagnostic> validate_annotation(const ChoreoAnnotation& a, const Vocabulary& vocab);

// Deterministic slot-layout flattening. Throws ConfigError when validation
// fails and VocabOverflow when the phrase slots alone exceed l_max.
std::vector<int> extract_tokens(const ChoreoAnnotation& a, const Vocabulary& vocab,
                                int l_max = 256);

// --- JSON ---
ChoreoAnnotation annotation_from_json(const std::string& json_text);
std::string annotation_to_json(const ChoreoAnnotation& a);

// --- statistical QC ---

struct QcBatch {
    int batch_id = 0;
    long begin = 0;
    long size = 0;
    std::vector<long> sampled;  // absolute segment ids, n per batch
};

struct QcPlan {
    std::vector<QcBatch> batches;
};

QcPlan qc_plan(long total, int batch_count, int n, uint64_t seed);

struct QcBatchReport {
    int batch_id = 0;
    std::vector<long> sampled;
    std::vector<int> scores;  // 1..5
    double acceptance_rate = 0.0;
    bool pass = false;
};

QcBatchReport qc_evaluate(const std::vector<int>& scores, int threshold_score = 3,
                          double required_rate = 0.95, int batch_id = 0);

std::string qc_report_to_json(const QcBatchReport& r);

}  // namespace dc::choreo
