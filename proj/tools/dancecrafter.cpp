// dancecrafter: command-line front end for the motion generation stack.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "dc/choreo.hpp"
#include "dc/error.hpp"
#include "dc/eval.hpp"
#include "dc/flow.hpp"
#include "dc/io.hpp"
#include "dc/kinematics.hpp"
#include "dc/model.hpp"
#include "dc/repr.hpp"
#include "dc/schema.hpp"

using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dc::ConfigError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw dc::ConfigError("cannot open for writing: " + path);
    out << text;
}

// CSV with full double precision; the continuous-space interchange format.
void write_csv(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) throw dc::ConfigError("cannot open for writing: " + path);
    out.precision(17);
    for (long r = 0; r < m.rows(); ++r) {
        for (long c = 0; c < m.cols(); ++c) {
            if (c) out << ',';
            out << m(r, c);
        }
        out << '\n';
    }
}

Eigen::MatrixXd read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dc::ConfigError("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows[0].size())
            throw dc::ParseError(path + ": ragged CSV row " + std::to_string(rows.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw dc::ParseError(path + ": empty CSV");
    Eigen::MatrixXd m(static_cast<long>(rows.size()), static_cast<long>(rows[0].size()));
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c)
            m(static_cast<long>(r), static_cast<long>(c)) = rows[r][c];
    return m;
}

std::vector<dc::eval::FeatureVector> corpus_kinetic_features(const std::string& dir,
                                                             const dc::schema::SkeletonSchema& sch) {
    std::vector<dc::eval::FeatureVector> feats;
    for (const auto& item : dc::io::read_manifest(dir)) {
        const dc::repr::MotionSequence m = dc::io::read_motion(item.motion_path, sch, true);
        feats.push_back(
            dc::eval::kinetic_features(dc::kin::forward_kinematics(m, sch), m.fps));
    }
    return feats;
}

std::vector<dc::eval::FeatureVector> corpus_geometric_features(
    const std::string& dir, const dc::schema::SkeletonSchema& sch,
    const std::vector<dc::eval::GeometricPredicate>& preds) {
    std::vector<dc::eval::FeatureVector> feats;
    for (const auto& item : dc::io::read_manifest(dir)) {
        const dc::repr::MotionSequence m = dc::io::read_motion(item.motion_path, sch, true);
        feats.push_back(
            dc::eval::geometric_features(dc::kin::forward_kinematics(m, sch), sch, preds));
    }
    return feats;
}

int run(int argc, char** argv) {
    CLI::App app{"dancecrafter: text-conditioned motion generation toolkit"};
    app.require_subcommand(1);

    std::string schema_name = "mhr260";
    app.add_option("--schema", schema_name, "schema name or file path (default mhr260)");

    // schema check
    auto* sc_schema = app.add_subcommand("schema", "schema utilities");
    sc_schema->require_subcommand(1);
    std::string check_target;
    auto* sc_check = sc_schema->add_subcommand("check", "parse and validate a schema");
    sc_check->add_option("target", check_target, "schema name or path")->required();

    // encode / decode
    std::string in_path, out_path;
    auto* sc_encode =
        app.add_subcommand("encode", "motion file -> continuous CSV (unnormalized)");
    sc_encode->add_option("--in", in_path, "input .dfm motion file")->required();
    sc_encode->add_option("--out", out_path, "output CSV")->required();

    std::string dec_in, dec_out;
    double dec_fps = 30.0;
    auto* sc_decode =
        app.add_subcommand("decode", "continuous CSV (unnormalized) -> motion file");
    sc_decode->add_option("--in", dec_in, "input CSV")->required();
    sc_decode->add_option("--out", dec_out, "output .dfm motion file")->required();
    sc_decode->add_option("--fps", dec_fps, "frame rate for the output file");

    // stats fit
    auto* sc_stats = app.add_subcommand("stats", "normalization statistics");
    sc_stats->require_subcommand(1);
    std::string stats_corpus, stats_out, stats_mode = "hybrid260";
    auto* sc_fit = sc_stats->add_subcommand("fit", "fit normalization stats over a corpus");
    sc_fit->add_option("--corpus", stats_corpus, "corpus directory with manifest.json")
        ->required();
    sc_fit->add_option("--out", stats_out, "output stats JSON")->required();
    sc_fit->add_option("--mode", stats_mode, "hybrid260 | zscore136")
        ->check(CLI::IsMember({"hybrid260", "zscore136"}));

    // train
    std::string train_corpus, train_out, train_log, train_mode = "hybrid260";
    int train_steps = 3000, train_batch = 8, ckpt_every = 0;
    uint64_t train_seed = 1;
    bool no_fk = false;
    auto* sc_train = app.add_subcommand("train", "train the desk-preset velocity model");
    sc_train->add_option("--corpus", train_corpus, "corpus directory")->required();
    sc_train->add_option("--out", train_out, "output checkpoint")->required();
    sc_train->add_option("--steps", train_steps, "optimizer steps");
    sc_train->add_option("--batch", train_batch, "batch size");
    sc_train->add_option("--seed", train_seed, "seed");
    sc_train->add_option("--log", train_log, "JSONL training log path");
    sc_train->add_option("--mode", train_mode, "hybrid260 | zscore136")
        ->check(CLI::IsMember({"hybrid260", "zscore136"}));
    sc_train->add_option("--checkpoint-every", ckpt_every, "checkpoint cadence (0 = end only)");
    sc_train->add_flag("--no-fk", no_fk, "disable the FK loss term");

    // sample
    std::string smp_ckpt, smp_ann, smp_out;
    long smp_frames = 32;
    int smp_steps = 50;
    double smp_cfg = 1.0;
    uint64_t smp_seed = 0;
    bool smp_raw = false;
    auto* sc_sample = app.add_subcommand("sample", "generate motion from an annotation");
    sc_sample->add_option("--ckpt", smp_ckpt, "checkpoint path")->required();
    sc_sample->add_option("--annotation", smp_ann, "annotation JSON path")->required();
    sc_sample->add_option("--frames", smp_frames, "frames to generate")->required();
    sc_sample->add_option("--steps", smp_steps, "Euler integration steps");
    sc_sample->add_option("--cfg", smp_cfg, "classifier-free guidance scale");
    sc_sample->add_option("--seed", smp_seed, "noise seed");
    sc_sample->add_option("--out", smp_out, "output .dfm motion file")->required();
    sc_sample->add_flag("--no-ema", smp_raw, "sample with raw weights instead of the EMA");

    // eval
    std::string ev_protocol = "aistpp", ev_real, ev_gen, ev_preds;
    auto* sc_eval = app.add_subcommand("eval", "rule-based feature metrics");
    sc_eval->add_option("--protocol", ev_protocol, "evaluation protocol (aistpp)");
    sc_eval->add_option("--real", ev_real, "reference corpus directory")->required();
    sc_eval->add_option("--gen", ev_gen, "generated corpus directory")->required();
    sc_eval->add_option("--predicates", ev_preds, "geometric predicates JSON (optional)");

    // choreo
    auto* sc_choreo = app.add_subcommand("choreo", "annotation utilities");
    sc_choreo->require_subcommand(1);
    std::string cv_file;
    auto* sc_cval = sc_choreo->add_subcommand("validate", "validate an annotation JSON");
    sc_cval->add_option("file", cv_file, "annotation JSON path")->required();
    std::string ct_file;
    int ct_lmax = 256;
    auto* sc_ctok = sc_choreo->add_subcommand("tokens", "print the token sequence");
    sc_ctok->add_option("file", ct_file, "annotation JSON path")->required();
    sc_ctok->add_option("--l-max", ct_lmax, "token budget");

    // qc
    auto* sc_qc = app.add_subcommand("qc", "statistical quality control");
    sc_qc->require_subcommand(1);
    long qp_total = 20000;
    int qp_batches = 100, qp_n = 30;
    uint64_t qp_seed = 0;
    auto* sc_qplan = sc_qc->add_subcommand("plan", "build a sampling plan");
    sc_qplan->add_option("--total", qp_total, "total segments");
    sc_qplan->add_option("--batches", qp_batches, "batch count");
    sc_qplan->add_option("--n", qp_n, "samples per batch");
    sc_qplan->add_option("--seed", qp_seed, "seed");
    std::string qe_scores;
    int qe_threshold = 3;
    double qe_rate = 0.95;
    auto* sc_qeval = sc_qc->add_subcommand("eval", "evaluate a scored batch");
    sc_qeval->add_option("--scores", qe_scores, "comma-separated 1..5 scores")->required();
    sc_qeval->add_option("--threshold", qe_threshold, "acceptable score threshold");
    sc_qeval->add_option("--rate", qe_rate, "required acceptance rate");

    // synth-dataset
    std::string sd_out;
    int sd_per_class = 100;
    long sd_frames = 32;
    double sd_fps = 20.0;
    uint64_t sd_seed = 7;
    auto* sc_synth = app.add_subcommand("synth-dataset", "generate the synthetic 2-class corpus");
    sc_synth->add_option("--out", sd_out, "output directory")->required();
    sc_synth->add_option("--per-class", sd_per_class, "motions per class");
    sc_synth->add_option("--frames", sd_frames, "frames per motion");
    sc_synth->add_option("--fps", sd_fps, "frame rate");
    sc_synth->add_option("--seed", sd_seed, "seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e);
            return 0;
        }
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    if (*sc_check) {
        const auto sch = dc::io::resolve_schema(check_target);
        std::cout << "schema " << sch.name() << ": " << sch.joints().size() << " joints, native "
                  << sch.native_pose_dim() << ", continuous " << sch.continuous_dim() << "\n";
        return 0;
    }
    if (*sc_encode) {
        const auto sch = dc::io::resolve_schema(schema_name);
        const auto m = dc::io::read_motion(in_path, sch, true);
        write_csv(out_path, dc::repr::encode_sequence(m, sch).frames);
        return 0;
    }
    if (*sc_decode) {
        const auto sch = dc::io::resolve_schema(schema_name);
        dc::repr::ContinuousMotion c;
        c.schema_id = sch.name();
        c.fps = dec_fps;
        c.frames = read_csv(dec_in);
        dc::repr::DecodeDiagnostics diag;
        dc::repr::MotionSequence m = dc::repr::decode_sequence(c, sch, &diag);
        m.identity = Eigen::VectorXd::Zero(68);
        dc::io::write_motion(m, dec_out, sch);
        if (diag.total_degenerate > 0)
            std::cerr << "warning: " << diag.total_degenerate
                      << " degenerate rotation blocks decoded to identity\n";
        return 0;
    }
    if (*sc_fit) {
        const auto sch = dc::io::resolve_schema(schema_name);
        const auto mode = stats_mode == "zscore136" ? dc::flow::ReprMode::Zscore136
                                                    : dc::flow::ReprMode::Hybrid260;
        const auto corpus = dc::io::load_corpus(stats_corpus, sch, mode);
        spit(stats_out, dc::io::norm_stats_to_json(corpus.stats));
        std::cout << "fit " << stats_mode << " stats over " << corpus.items.size()
                  << " motions\n";
        return 0;
    }
    if (*sc_train) {
        const auto sch = dc::io::resolve_schema(schema_name);
        const auto mode = train_mode == "zscore136" ? dc::flow::ReprMode::Zscore136
                                                    : dc::flow::ReprMode::Hybrid260;
        const auto corpus = dc::io::load_corpus(train_corpus, sch, mode);
        dc::flow::TrainConfig cfg;
        cfg.model = dc::model::ModelConfig::desk(
            static_cast<int>(corpus.items[0].x0_bar.cols()),
            dc::choreo::Vocabulary().vocab_size());
        cfg.loss.mode = mode;
        cfg.loss.use_fk_loss = !no_fk;
        cfg.steps = train_steps;
        cfg.batch = train_batch;
        cfg.seed = train_seed;
        cfg.log_path = train_log;
        cfg.checkpoint_every = ckpt_every;
        cfg.checkpoint_cb = [&](const dc::flow::TrainResult& r) {
            dc::io::Checkpoint c{r.params, r.opt_state, r.step, corpus.stats, mode, corpus.fps};
            dc::io::write_checkpoint(c, train_out, sch);
        };
        const dc::flow::TrainResult res = dc::flow::train_loop(corpus.items, cfg, sch,
                                                               corpus.stats);
        dc::io::Checkpoint c{res.params, res.opt_state, res.step, corpus.stats, mode,
                             corpus.fps};
        dc::io::write_checkpoint(c, train_out, sch);
        if (res.aborted) {
            std::cerr << "non-finite loss; checkpoint holds the last good state (step "
                      << res.step << ")\n";
            return 1;
        }
        std::cout << "trained " << res.step << " steps, final loss "
                  << (res.history.empty() ? 0.0 : res.history.back().total) << "\n";
        return 0;
    }
    if (*sc_sample) {
        const auto sch = dc::io::resolve_schema(schema_name);
        const dc::io::Checkpoint ckpt = dc::io::read_checkpoint(smp_ckpt, sch);
        const dc::choreo::Vocabulary vocab;
        dc::model::ConditioningBundle cond;
        cond.tokens = dc::choreo::extract_tokens(dc::choreo::annotation_from_json(slurp(smp_ann)),
                                                 vocab, ckpt.params.config.l_max);
        cond.identity = Eigen::VectorXd::Zero(ckpt.params.config.identity_dim);
        dc::flow::SamplerConfig scfg{smp_steps, smp_cfg, smp_seed};
        const bool use_ema = !smp_raw && ckpt.params.ema_shadow.has_value();
        dc::repr::MotionSequence m;
        if (ckpt.mode == dc::flow::ReprMode::Hybrid260) {
            dc::repr::DecodeDiagnostics diag;
            m = dc::flow::sample(ckpt.params, cond, smp_frames, scfg, ckpt.stats, sch, &diag,
                                 use_ema, ckpt.fps);
            if (diag.total_degenerate > 0)
                std::cerr << "warning: " << diag.total_degenerate
                          << " degenerate rotation blocks decoded to identity\n";
        } else {
            m = dc::flow::sample_zscore136(ckpt.params, cond, smp_frames, scfg, ckpt.stats, sch,
                                           use_ema, ckpt.fps);
        }
        dc::io::write_motion(m, smp_out, sch);
        std::cout << "wrote " << smp_frames << " frames to " << smp_out << "\n";
        return 0;
    }
    if (*sc_eval) {
        if (ev_protocol != "aistpp") {
            std::cerr << "protocol '" << ev_protocol
                      << "' is not supported: only the rule-based aistpp feature protocol is "
                         "implemented (no learned feature extractors)\n";
            return 1;
        }
        const auto sch = dc::io::resolve_schema(schema_name);
        const auto preds = ev_preds.empty() ? dc::eval::default_predicates()
                                            : dc::eval::predicates_from_json(slurp(ev_preds));
        const auto rk = corpus_kinetic_features(ev_real, sch);
        const auto gk = corpus_kinetic_features(ev_gen, sch);
        const auto rg = corpus_geometric_features(ev_real, sch, preds);
        const auto gg = corpus_geometric_features(ev_gen, sch, preds);
        json out{{"fid_kinetic", dc::eval::frechet_distance(dc::eval::fit_gaussian(rk),
                                                            dc::eval::fit_gaussian(gk))},
                 {"fid_geometric", dc::eval::frechet_distance(dc::eval::fit_gaussian(rg),
                                                              dc::eval::fit_gaussian(gg))},
                 {"diversity_real", dc::eval::diversity(rk, 1000, 11)},
                 {"diversity_gen", dc::eval::diversity(gk, 1000, 11)},
                 {"real_count", rk.size()},
                 {"gen_count", gk.size()}};
        std::cout << out.dump(2) << "\n";
        return 0;
    }
    if (*sc_cval) {
        const auto a = dc::choreo::annotation_from_json(slurp(cv_file));
        const auto diags = dc::choreo::validate_annotation(a, dc::choreo::Vocabulary());
        for (const auto& d : diags)
            std::cout << "phrase " << d.phrase << " " << d.field << " '" << d.token
                      << "': " << d.message << "\n";
        if (diags.empty()) {
            std::cout << "valid (" << a.phrases.size() << " phrases)\n";
            return 0;
        }
        return 1;
    }
    if (*sc_ctok) {
        const auto tokens = dc::choreo::extract_tokens(
            dc::choreo::annotation_from_json(slurp(ct_file)), dc::choreo::Vocabulary(), ct_lmax);
        for (size_t i = 0; i < tokens.size(); ++i)
            std::cout << (i ? " " : "") << tokens[i];
        std::cout << "\n";
        return 0;
    }
    if (*sc_qplan) {
        const auto plan = dc::choreo::qc_plan(qp_total, qp_batches, qp_n, qp_seed);
        json out{{"batches", plan.batches.size()},
                 {"batch_size", plan.batches.empty() ? 0 : plan.batches[0].size},
                 {"n_per_batch", qp_n}};
        std::cout << out.dump(2) << "\n";
        return 0;
    }
    if (*sc_qeval) {
        std::vector<int> scores;
        std::stringstream ss(qe_scores);
        std::string cell;
        while (std::getline(ss, cell, ',')) scores.push_back(std::stoi(cell));
        const auto report = dc::choreo::qc_evaluate(scores, qe_threshold, qe_rate);
        std::cout << dc::choreo::qc_report_to_json(report) << "\n";
        if (report.pass) return 0;
        std::cerr << "batch failed QC: acceptance rate " << report.acceptance_rate << " < "
                  << qe_rate << "\n";
        return 1;
    }
    if (*sc_synth) {
        const auto sch = dc::io::resolve_schema(schema_name);
        dc::io::SynthConfig cfg;
        cfg.per_class = sd_per_class;
        cfg.frames = sd_frames;
        cfg.fps = sd_fps;
        cfg.seed = sd_seed;
        cfg.out_dir = sd_out;
        const auto res = dc::io::synth_dataset(cfg, sch);
        std::cout << "wrote " << res.motion_files << " motions + " << res.annotation_files
                  << " annotations to " << sd_out << " (separation " << res.separation << ")\n";
        return 0;
    }
    std::cerr << app.help() << "\n";
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const dc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
