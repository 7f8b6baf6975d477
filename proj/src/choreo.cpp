#include "dc/choreo.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "dc/error.hpp"
#include "dc/rng.hpp"

namespace dc::choreo {

using nlohmann::json;

const std::vector<std::string>& segments() {
    static const std::vector<std::string> v = {"head",    "left_arm", "right_arm", "back",
                                               "waist",   "abdomen",  "left_leg",  "right_leg"};
    return v;
}

const std::vector<std::string>& planes() {
    static const std::vector<std::string> v = {"transverse", "sagittal", "coronal"};
    return v;
}

const std::vector<std::string>& directions() {
    static const std::vector<std::string> v = {"up", "down", "left", "right", "forward", "backward"};
    return v;
}

const std::vector<std::string>& levels() {
    static const std::vector<std::string> v = {"low", "middle", "high"};
    return v;
}

const std::vector<std::string>& effort_polarities() {
    static const std::vector<std::string> v = {"light", "strong",    "direct", "indirect",
                                               "sudden", "sustained", "free",   "bound"};
    return v;
}

namespace {

const std::vector<std::string>& builtin_terms() {
    static const std::vector<std::string> v = {
        "raise", "lower", "lift",  "kick",   "bend",  "extend", "rotate", "swing", "wave",  "hold",
        "step",  "twist", "reach", "drop",   "circle", "push",  "pull",   "shake", "sway",  "turn"};
    return v;
}

int find_in(const std::vector<std::string>& v, const std::string& s) {
    auto it = std::find(v.begin(), v.end(), s);
    return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

// FNV-1a, stable across platforms.
uint32_t fnv1a(const std::string& s) {
    uint32_t h = 2166136261u;
    for (unsigned char c : s) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> extra_terms) {
    terms_ = builtin_terms();
    for (auto& t : extra_terms)
        if (find_in(terms_, t) < 0) terms_.push_back(std::move(t));
    term_base_ = 2;  // after NONE, PHRASE
    plane_base_ = term_base_ + static_cast<int>(terms_.size());
    dir_base_ = plane_base_ + static_cast<int>(planes().size());
    level_base_ = dir_base_ + static_cast<int>(directions().size());
    clock_base_ = level_base_ + static_cast<int>(levels().size());
    effort_base_ = clock_base_ + 8;
    free_base_ = effort_base_ + static_cast<int>(effort_polarities().size());
}

bool Vocabulary::has_term(const std::string& t) const { return find_in(terms_, t) >= 0; }

int Vocabulary::term_token(const std::string& t) const {
    const int i = find_in(terms_, t);
    return i < 0 ? -1 : term_base_ + i;
}
int Vocabulary::plane_token(const std::string& p) const {
    const int i = find_in(planes(), p);
    return i < 0 ? -1 : plane_base_ + i;
}
int Vocabulary::direction_token(const std::string& d) const {
    const int i = find_in(directions(), d);
    return i < 0 ? -1 : dir_base_ + i;
}
int Vocabulary::level_token(const std::string& l) const {
    const int i = find_in(levels(), l);
    return i < 0 ? -1 : level_base_ + i;
}
int Vocabulary::clock_token(int clock) const {
    return (clock < 1 || clock > 8) ? -1 : clock_base_ + clock - 1;
}
int Vocabulary::effort_token(const std::string& p) const {
    const int i = find_in(effort_polarities(), p);
    return i < 0 ? -1 : effort_base_ + i;
}
int Vocabulary::free_text_token(const std::string& word) const {
    return free_base_ + static_cast<int>(fnv1a(word) % kFreeTextBuckets);
}
int Vocabulary::vocab_size() const { return free_base_ + kFreeTextBuckets; }

std::vector<Diagnostic> validate_annotation(const ChoreoAnnotation& a, const Vocabulary& vocab) {
    std::vector<Diagnostic> out;
    auto flag = [&](int phrase, std::string field, std::string token, std::string msg) {
        out.push_back({phrase, std::move(field), std::move(token), std::move(msg)});
    };
    if (a.phrases.empty()) flag(-1, "phrases", "", "annotation has no phrases");
    for (size_t i = 0; i < a.phrases.size(); ++i) {
        const int pi = static_cast<int>(i);
        const auto& p = a.phrases[i];
        if (p.body.empty()) flag(pi, "body", "", "no body segment specified");
        for (const auto& [seg, term] : p.body) {
            if (find_in(segments(), seg) < 0)
                flag(pi, "body", seg, "unknown body segment");
            if (!vocab.has_term(term))
                flag(pi, "body." + seg, term, "unknown movement term");
        }
        if (p.space) {
            if (vocab.plane_token(p.space->plane) < 0)
                flag(pi, "space.plane", p.space->plane, "unknown anatomical plane");
            if (vocab.direction_token(p.space->direction) < 0)
                flag(pi, "space.direction", p.space->direction, "unknown spatial direction");
            if (vocab.level_token(p.space->level) < 0)
                flag(pi, "space.level", p.space->level, "unknown level");
        }
        if (p.orientation && (*p.orientation < 1 || *p.orientation > 8))
            flag(pi, "orientation", std::to_string(*p.orientation),
                 "clock direction out of range 1..8");
        if (p.effort) {
            auto check = [&](const std::string& field, const std::string& v,
                             const std::string& lo, const std::string& hi) {
                if (!v.empty() && v != lo && v != hi)
                    flag(pi, "effort." + field, v, "expected '" + lo + "' or '" + hi + "'");
            };
            check("weight", p.effort->weight, "light", "strong");
            check("space", p.effort->space_q, "direct", "indirect");
            check("time", p.effort->time, "sudden", "sustained");
            check("flow", p.effort->flow, "free", "bound");
        }
    }
    if (a.free_text) {
        std::istringstream is(*a.free_text);
        int words = 0;
        std::string w;
        while (is >> w) ++words;
        if (words != a.word_count)
            flag(-1, "word_count", std::to_string(a.word_count),
                 "word_count does not match free_text (" + std::to_string(words) + " words)");
    }
    return out;
}

std::vector<int> extract_tokens(const ChoreoAnnotation& a, const Vocabulary& vocab, int l_max) {
    const auto diags = validate_annotation(a, vocab);
    if (!diags.empty())
        throw ConfigError("extract_tokens: annotation fails validation (" + diags[0].message + ")");
    const int per = Vocabulary::kSlotsPerPhrase;
    if (static_cast<long>(a.phrases.size()) * per > l_max)
        throw VocabOverflow("extract_tokens: " + std::to_string(a.phrases.size()) +
                            " phrases exceed the L_max=" + std::to_string(l_max) + " budget");
    std::vector<int> out;
    out.reserve(static_cast<size_t>(l_max));
    for (const auto& p : a.phrases) {
        out.push_back(Vocabulary::kPhrase);
        for (const auto& seg : segments()) {
            auto it = p.body.find(seg);
            out.push_back(it == p.body.end() ? Vocabulary::kNone : vocab.term_token(it->second));
        }
        out.push_back(p.space ? vocab.plane_token(p.space->plane) : Vocabulary::kNone);
        out.push_back(p.space ? vocab.direction_token(p.space->direction) : Vocabulary::kNone);
        out.push_back(p.space ? vocab.level_token(p.space->level) : Vocabulary::kNone);
        out.push_back(p.orientation ? vocab.clock_token(*p.orientation) : Vocabulary::kNone);
        if (p.effort) {
            auto tok = [&](const std::string& v) {
                return v.empty() ? Vocabulary::kNone : vocab.effort_token(v);
            };
            out.push_back(tok(p.effort->weight));
            out.push_back(tok(p.effort->space_q));
            out.push_back(tok(p.effort->time));
            out.push_back(tok(p.effort->flow));
        } else {
            for (int k = 0; k < 4; ++k) out.push_back(Vocabulary::kNone);
        }
    }
    if (a.free_text) {
        std::istringstream is(*a.free_text);
        std::string w;
        while (is >> w && static_cast<int>(out.size()) < l_max)
            out.push_back(vocab.free_text_token(w));
    }
    return out;
}

ChoreoAnnotation annotation_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("annotation JSON: ") + e.what());
    }
    try {
        ChoreoAnnotation a;
        for (const auto& jp : j.value("phrases", json::array())) {
            ChoreoPhrase p;
            if (jp.contains("body"))
                for (auto it = jp["body"].begin(); it != jp["body"].end(); ++it)
                    p.body[it.key()] = it.value().get<std::string>();
            if (jp.contains("space")) {
                SpaceSpec s;
                s.plane = jp["space"].value("plane", "");
                s.direction = jp["space"].value("direction", "");
                s.level = jp["space"].value("level", "");
                p.space = s;
            }
            if (jp.contains("orientation")) p.orientation = jp["orientation"].get<int>();
            if (jp.contains("effort")) {
                EffortSpec e;
                e.weight = jp["effort"].value("weight", "");
                e.space_q = jp["effort"].value("space", "");
                e.time = jp["effort"].value("time", "");
                e.flow = jp["effort"].value("flow", "");
                p.effort = e;
            }
            a.phrases.push_back(std::move(p));
        }
        if (j.contains("free_text")) a.free_text = j["free_text"].get<std::string>();
        a.word_count = j.value("word_count", 0);
        return a;
    } catch (const json::exception& e) {
        throw ParseError(std::string("annotation JSON structure: ") + e.what());
    }
}

std::string annotation_to_json(const ChoreoAnnotation& a) {
    json j;
    j["phrases"] = json::array();
    for (const auto& p : a.phrases) {
        json jp;
        jp["body"] = json::object();
        for (const auto& [k, v] : p.body) jp["body"][k] = v;
        if (p.space)
            jp["space"] = {{"plane", p.space->plane},
                           {"direction", p.space->direction},
                           {"level", p.space->level}};
        if (p.orientation) jp["orientation"] = *p.orientation;
        if (p.effort)
            jp["effort"] = {{"weight", p.effort->weight},
                            {"space", p.effort->space_q},
                            {"time", p.effort->time},
                            {"flow", p.effort->flow}};
        j["phrases"].push_back(jp);
    }
    if (a.free_text) {
        j["free_text"] = *a.free_text;
        j["word_count"] = a.word_count;
    }
    return j.dump(2);
}

QcPlan qc_plan(long total, int batch_count, int n, uint64_t seed) {
    if (batch_count <= 0 || total < batch_count)
        throw ConfigError("qc_plan: need total >= batch_count >= 1");
    const long base = total / batch_count;
    const long extra = total % batch_count;
    if (n > base) throw ConfigError("qc_plan: n exceeds the smallest batch size");
    Rng rng(seed);
    QcPlan plan;
    long begin = 0;
    for (int b = 0; b < batch_count; ++b) {
        QcBatch batch;
        batch.batch_id = b;
        batch.begin = begin;
        batch.size = base + (b < extra ? 1 : 0);
        auto rel = rng.sample_without_replacement(static_cast<uint64_t>(batch.size),
                                                  static_cast<uint64_t>(n));
        std::sort(rel.begin(), rel.end());
        for (uint64_t r : rel) batch.sampled.push_back(begin + static_cast<long>(r));
        begin += batch.size;
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

QcBatchReport qc_evaluate(const std::vector<int>& scores, int threshold_score, double required_rate,
                          int batch_id) {
    if (scores.empty()) throw RangeError("qc_evaluate: empty score list");
    long acceptable = 0;
    for (int s : scores) {
        if (s < 1 || s > 5)
            throw RangeError("qc_evaluate: score " + std::to_string(s) + " outside 1..5");
        if (s >= threshold_score) ++acceptable;
    }
    QcBatchReport r;
    r.batch_id = batch_id;
    r.scores = scores;
    r.acceptance_rate = static_cast<double>(acceptable) / static_cast<double>(scores.size());
    r.pass = r.acceptance_rate >= required_rate;
    return r;
}

std::string qc_report_to_json(const QcBatchReport& r) {
    json j;
    j["batch_id"] = r.batch_id;
    if (!r.sampled.empty()) j["sampled"] = r.sampled;
    j["scores"] = r.scores;
    j["acceptance_rate"] = r.acceptance_rate;
    j["verdict"] = r.pass ? "pass" : "fail";
    return j.dump();
}

}  // namespace dc::choreo
