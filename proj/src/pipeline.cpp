#include "tcvads/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "tcvads/errors.hpp"
#include "tcvads/feature_io.hpp"
#include "tcvads/metrics.hpp"
#include "tcvads/numerics.hpp"

namespace fs = std::filesystem;

namespace tcvads {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) known = known || it.key() == k;
        if (!known) throw validation_error(where + ": unknown key \"" + it.key() + "\"");
    }
}

double read_double(const json& j, const std::string& where, const char* key, double fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number()) throw validation_error(where + "." + key + " must be a number");
    return it->get<double>();
}

uint64_t read_u64(const json& j, const std::string& where, const char* key, uint64_t fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number_unsigned())
        throw validation_error(where + "." + key + " must be a nonnegative integer");
    return it->get<uint64_t>();
}

size_t read_size(const json& j, const std::string& where, const char* key, size_t fallback) {
    return static_cast<size_t>(read_u64(j, where, key, fallback));
}

int read_int(const json& j, const std::string& where, const char* key, int fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number_integer() && !it->is_number_unsigned())
        throw validation_error(where + "." + key + " must be an integer");
    return it->get<int>();
}

const json& expect_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw validation_error(where + " must be a JSON object");
    return j;
}

void parse_synth(const json& j, SyntheticSpec& s) {
    const std::string where = "config.synth";
    expect_object(j, where);
    check_keys(j, where,
               {"classes", "train_per_class", "test_per_class", "frames", "dim", "burst_len",
                "separation", "noise"});
    if (auto it = j.find("classes"); it != j.end()) {
        if (!it->is_array()) throw validation_error(where + ".classes must be an array");
        s.classes = ClassSet::from_json_text(it->dump());
    }
    s.train_per_class = read_size(j, where, "train_per_class", s.train_per_class);
    s.test_per_class = read_size(j, where, "test_per_class", s.test_per_class);
    s.frames = read_size(j, where, "frames", s.frames);
    s.dim = read_size(j, where, "dim", s.dim);
    s.burst_len = read_size(j, where, "burst_len", s.burst_len);
    s.separation = read_double(j, where, "separation", s.separation);
    s.noise = read_double(j, where, "noise", s.noise);
}

void parse_teacher(const json& j, TrainConfig& t) {
    const std::string where = "config.teacher";
    expect_object(j, where);
    check_keys(j, where, {"learning_rate", "epochs", "batch_size", "chunk_length",
                          "topk_fraction"});
    t.learning_rate = read_double(j, where, "learning_rate", t.learning_rate);
    t.epochs = read_size(j, where, "epochs", t.epochs);
    t.batch_size = read_size(j, where, "batch_size", t.batch_size);
    t.chunk_length = read_size(j, where, "chunk_length", t.chunk_length);
    t.topk_fraction = read_double(j, where, "topk_fraction", t.topk_fraction);
}

void parse_distill(const json& j, DistillConfig& d) {
    const std::string where = "config.distill";
    expect_object(j, where);
    check_keys(j, where, {"lambda", "epochs", "learning_rate", "batch_size", "hidden",
                          "probe_epochs", "chunk_length"});
    d.lambda = read_double(j, where, "lambda", d.lambda);
    d.epochs = read_size(j, where, "epochs", d.epochs);
    d.learning_rate = read_double(j, where, "learning_rate", d.learning_rate);
    d.batch_size = read_size(j, where, "batch_size", d.batch_size);
    d.hidden = read_size(j, where, "hidden", d.hidden);
    d.probe_epochs = read_size(j, where, "probe_epochs", d.probe_epochs);
    d.chunk_length = read_size(j, where, "chunk_length", d.chunk_length);
}

void parse_bo(const json& j, BoConfig& b) {
    const std::string where = "config.bo";
    expect_object(j, where);
    check_keys(j, where, {"t_min", "t_max", "n_init", "n_iter", "grid_resolution"});
    b.t_min = read_double(j, where, "t_min", b.t_min);
    b.t_max = read_double(j, where, "t_max", b.t_max);
    b.n_init = read_size(j, where, "n_init", b.n_init);
    b.n_iter = read_size(j, where, "n_iter", b.n_iter);
    b.grid_resolution = read_size(j, where, "grid_resolution", b.grid_resolution);
}

void parse_fine(const json& j, RunConfig& cfg) {
    const std::string where = "config.fine";
    expect_object(j, where);
    check_keys(j, where, {"learning_rate", "epochs", "batch_size", "chunk_length", "tau",
                          "delta", "lambda1", "lambda2", "alpha", "beta", "learnable_count"});
    cfg.fine.learning_rate = read_double(j, where, "learning_rate", cfg.fine.learning_rate);
    cfg.fine.epochs = read_size(j, where, "epochs", cfg.fine.epochs);
    cfg.fine.batch_size = read_size(j, where, "batch_size", cfg.fine.batch_size);
    cfg.fine.chunk_length = read_size(j, where, "chunk_length", cfg.fine.chunk_length);
    cfg.fine_tau = read_double(j, where, "tau", cfg.fine_tau);
    cfg.fine_delta = read_double(j, where, "delta", cfg.fine_delta);
    cfg.fine_lambda1 = read_double(j, where, "lambda1", cfg.fine_lambda1);
    cfg.fine_lambda2 = read_double(j, where, "lambda2", cfg.fine_lambda2);
    cfg.fine_alpha = read_double(j, where, "alpha", cfg.fine_alpha);
    cfg.fine_beta = read_double(j, where, "beta", cfg.fine_beta);
    cfg.fine_learnable = read_size(j, where, "learnable_count", cfg.fine_learnable);
}

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ", ";
        out += ids[i];
    }
    return out;
}

std::string iou_key(double t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.1f", t);
    return buf;
}

}  // namespace

void RunConfig::validate() const {
    if (!(gate_threshold >= 0.0 && gate_threshold <= 1.0))
        throw validation_error("gate_threshold must lie in [0, 1], got " +
                               std::to_string(gate_threshold));
    if (partitions < 1) throw validation_error("partitions must be at least 1");
    synth.classes.validate();
    if (!(synth.separation > 0.0)) throw validation_error("synth.separation must be positive");
    if (!(teacher.learning_rate > 0.0) || !std::isfinite(teacher.learning_rate))
        throw validation_error("teacher.learning_rate must be positive and finite");
    if (teacher.epochs == 0) throw validation_error("teacher.epochs must be at least 1");
    if (teacher.batch_size == 0) throw validation_error("teacher.batch_size must be at least 1");
    if (!(teacher.topk_fraction > 0.0 && teacher.topk_fraction <= 1.0))
        throw validation_error("teacher.topk_fraction must lie in (0, 1]");
    distill.validate();
    bo.validate();
    fine.validate();
    if (!(fine_tau > 0.0)) throw validation_error("fine.tau must be > 0");
    if (!(fine_delta >= 0.0 && fine_delta <= 1.0))
        throw validation_error("fine.delta must be in [0, 1]");
    if (fine_lambda1 < 0.0 || fine_lambda2 < 0.0)
        throw validation_error("fine regularization weights must be nonnegative");
    if (fine_alpha < 0.0 || fine_beta < 0.0)
        throw validation_error("fine loss weights must be nonnegative");
    if (fine_learnable == 0) throw validation_error("fine.learnable_count must be at least 1");
}

RunConfig RunConfig::normalized() const {
    RunConfig c = *this;
    c.synth.seed = seed;
    c.teacher.seed = seed;
    c.teacher.partitions = partitions;
    c.distill.seed = seed;
    c.distill.partitions = partitions;
    c.fine.seed = seed;
    c.fine.partitions = partitions;
    return c;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& ex) {
        throw validation_error(std::string("config is not valid JSON: ") + ex.what());
    }
    expect_object(j, "config");
    check_keys(j, "config",
               {"seed", "gate_threshold", "partitions", "synth", "teacher", "distill", "bo",
                "fine"});
    RunConfig cfg;
    cfg.seed = read_u64(j, "config", "seed", cfg.seed);
    cfg.gate_threshold = read_double(j, "config", "gate_threshold", cfg.gate_threshold);
    cfg.partitions = read_int(j, "config", "partitions", cfg.partitions);
    if (auto it = j.find("synth"); it != j.end()) parse_synth(*it, cfg.synth);
    if (auto it = j.find("teacher"); it != j.end()) parse_teacher(*it, cfg.teacher);
    if (auto it = j.find("distill"); it != j.end()) parse_distill(*it, cfg.distill);
    if (auto it = j.find("bo"); it != j.end()) parse_bo(*it, cfg.bo);
    if (auto it = j.find("fine"); it != j.end()) parse_fine(*it, cfg);
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string RunConfig::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["gate_threshold"] = gate_threshold;
    j["partitions"] = partitions;
    json s;
    s["classes"] = json::parse(synth.classes.to_json_text());
    s["train_per_class"] = synth.train_per_class;
    s["test_per_class"] = synth.test_per_class;
    s["frames"] = synth.frames;
    s["dim"] = synth.dim;
    s["burst_len"] = synth.burst_len;
    s["separation"] = synth.separation;
    s["noise"] = synth.noise;
    j["synth"] = s;
    json t;
    t["learning_rate"] = teacher.learning_rate;
    t["epochs"] = teacher.epochs;
    t["batch_size"] = teacher.batch_size;
    t["chunk_length"] = teacher.chunk_length;
    t["topk_fraction"] = teacher.topk_fraction;
    j["teacher"] = t;
    json d;
    d["lambda"] = distill.lambda;
    d["epochs"] = distill.epochs;
    d["learning_rate"] = distill.learning_rate;
    d["batch_size"] = distill.batch_size;
    d["hidden"] = distill.hidden;
    d["probe_epochs"] = distill.probe_epochs;
    d["chunk_length"] = distill.chunk_length;
    j["distill"] = d;
    json b;
    b["t_min"] = bo.t_min;
    b["t_max"] = bo.t_max;
    b["n_init"] = bo.n_init;
    b["n_iter"] = bo.n_iter;
    b["grid_resolution"] = bo.grid_resolution;
    j["bo"] = b;
    json f;
    f["learning_rate"] = fine.learning_rate;
    f["epochs"] = fine.epochs;
    f["batch_size"] = fine.batch_size;
    f["chunk_length"] = fine.chunk_length;
    f["tau"] = fine_tau;
    f["delta"] = fine_delta;
    f["lambda1"] = fine_lambda1;
    f["lambda2"] = fine_lambda2;
    f["alpha"] = fine_alpha;
    f["beta"] = fine_beta;
    f["learnable_count"] = fine_learnable;
    j["fine"] = f;
    return j.dump(2) + "\n";
}

StageReport run_two_stage(const RunConfig& cfg, const StageModels& models,
                          const std::vector<VideoInput>& videos) {
    cfg.validate();
    models.student.validate();
    if (models.fine) models.fine->validate();
    StageReport report;
    report.decisions.reserve(videos.size());
    for (const VideoInput& v : videos) {
        StudentForward fwd = student_forward(models.student, v.features);
        StageDecision dec;
        dec.id = v.id;
        dec.coarse_score = sigmoid(fwd.logit);
        dec.frame_scores.reserve(fwd.frame_logits.size());
        for (double z : fwd.frame_logits) dec.frame_scores.push_back(sigmoid(z));
        dec.anomalous = dec.coarse_score >= cfg.gate_threshold;
        if (dec.anomalous) {
            if (!models.fine || !models.provider)
                throw validation_error("video " + v.id +
                                       " crossed the gate but no fine model is loaded");
            const Matrix& feats = v.fine_features ? *v.fine_features : v.features;
            std::vector<double> probs = fine_predict(*models.fine, *models.provider, feats,
                                                     cfg.partitions, cfg.fine.chunk_length);
            size_t best = 0;
            for (size_t c = 1; c < probs.size(); ++c)
                if (probs[c] > probs[best]) best = c;
            dec.fine_probs = std::move(probs);
            dec.fine_class = models.fine->classes.labels[best];
            ++report.fine_calls;
        }
        report.decisions.push_back(std::move(dec));
    }
    return report;
}

std::vector<PredictionRecord> predictions_from_report(const StageReport& report) {
    std::vector<PredictionRecord> out;
    out.reserve(report.decisions.size());
    for (const StageDecision& d : report.decisions) {
        PredictionRecord r;
        r.id = d.id;
        r.video_score = d.coarse_score;
        r.frame_scores = d.frame_scores;
        r.fine_class = d.fine_class;
        out.push_back(std::move(r));
    }
    return out;
}

void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw validation_error("cannot open predictions for writing: " + path);
    for (const PredictionRecord& r : records) {
        json j;
        j["id"] = r.id;
        j["video_score"] = r.video_score;
        if (r.frame_scores) j["frame_scores"] = *r.frame_scores;
        if (r.fine_class) j["fine_class"] = *r.fine_class;
        out << j.dump() << "\n";
    }
    if (!out) throw validation_error("write failed: " + path);
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open predictions: " + path);
    std::vector<PredictionRecord> records;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            throw validation_error(where + ": invalid JSON: " + ex.what());
        }
        expect_object(j, where);
        check_keys(j, where, {"id", "video_score", "frame_scores", "fine_class"});
        try {
            PredictionRecord r;
            r.id = j.at("id").get<std::string>();
            r.video_score = j.at("video_score").get<double>();
            if (j.contains("frame_scores"))
                r.frame_scores = j.at("frame_scores").get<std::vector<double>>();
            if (j.contains("fine_class")) r.fine_class = j.at("fine_class").get<std::string>();
            records.push_back(std::move(r));
        } catch (const json::exception& ex) {
            throw validation_error(where + ": malformed prediction: " + ex.what());
        }
    }
    return records;
}

std::string MetricReport::to_json_text() const {
    json j;
    j["ap"] = ap;
    j["auc"] = auc;
    if (ano_auc_value)
        j["ano_auc"] = *ano_auc_value;
    else
        j["ano_auc"] = nullptr;
    if (map_values) {
        json m;
        for (const auto& [k, v] : *map_values) m[k] = v;
        j["map_at_iou"] = m;
    } else {
        j["map_at_iou"] = nullptr;
    }
    return j.dump(2) + "\n";
}

MetricReport eval_command(const std::vector<ManifestEntry>& entries,
                          const std::vector<PredictionRecord>& predictions,
                          const ClassSet& classes, double segment_threshold) {
    validate_manifest(entries, classes);
    std::unordered_map<std::string, const PredictionRecord*> by_id;
    for (const PredictionRecord& r : predictions) {
        if (!by_id.emplace(r.id, &r).second)
            throw validation_error("duplicate prediction for id " + r.id);
    }
    std::vector<std::string> missing;
    for (const ManifestEntry& e : entries)
        if (!by_id.count(e.id)) missing.push_back(e.id);
    if (!missing.empty())
        throw validation_error("predictions missing for: " + join_ids(missing));

    std::vector<ScoredItem> video_items;
    video_items.reserve(entries.size());
    std::vector<ScoredItem> frame_items;
    std::vector<TemporalSegment> pred_segments, gt_segments;
    size_t offset = 0;
    bool any_frame_labels = false, any_spans = false;
    for (const ManifestEntry& e : entries) {
        const PredictionRecord& p = *by_id.at(e.id);
        ScoredItem item;
        item.score = p.video_score;
        item.label = e.video_label;
        item.video_class = e.class_label;
        video_items.push_back(item);

        if ((e.frame_labels || e.frame_class_spans) && !p.frame_scores)
            throw validation_error("prediction for " + e.id +
                                   " lacks frame scores but the manifest has frame annotations");
        if (!p.frame_scores) continue;
        size_t n = p.frame_scores->size();
        check_frame_count(e, n);
        if (e.frame_labels) {
            any_frame_labels = true;
            for (size_t i = 0; i < n; ++i) {
                ScoredItem f;
                f.score = (*p.frame_scores)[i];
                f.label = (*e.frame_labels)[i];
                f.video_class = e.class_label;
                frame_items.push_back(f);
            }
        }
        std::string seg_class = classes.normal_label();
        if (p.fine_class) {
            if (!classes.contains(*p.fine_class))
                throw validation_error("prediction for " + e.id + " names unknown class \"" +
                                       *p.fine_class + "\"");
            seg_class = *p.fine_class;
        }
        // Normal-class runs never match any ground-truth class, so a video
        // the fine stage skipped contributes no detections.
        std::vector<std::string> frame_classes(n, seg_class);
        for (TemporalSegment seg :
             segments_from_scores(*p.frame_scores, frame_classes, segment_threshold)) {
            seg.start += offset;
            seg.end += offset;
            pred_segments.push_back(seg);
        }
        if (e.frame_class_spans) {
            any_spans = true;
            for (const FrameClassSpan& s : *e.frame_class_spans) {
                TemporalSegment g;
                g.start = s.start + offset;
                g.end = s.end + offset;
                g.class_label = s.class_label;
                g.score = 1.0;
                gt_segments.push_back(g);
            }
        }
        offset += n;
    }

    MetricReport report;
    report.ap = average_precision(video_items);
    report.auc = roc_auc(video_items);
    if (any_frame_labels)
        report.ano_auc_value = ano_auc(frame_items, classes.normal_label(), true);
    if (any_spans) {
        std::map<double, double> by_threshold = map_at_iou(pred_segments, gt_segments);
        std::map<std::string, double> named;
        double sum = 0.0;
        for (const auto& [t, v] : by_threshold) {
            named[iou_key(t)] = v;
            sum += v;
        }
        named["avg"] = sum / static_cast<double>(by_threshold.size());
        report.map_values = std::move(named);
    }
    return report;
}

FineGrainedModel fine_model_from_config(const RunConfig& cfg, size_t dim,
                                        const ClassSet& classes) {
    FineGrainedModel m = FineGrainedModel::seeded(dim, classes, cfg.seed, cfg.fine_learnable);
    m.tau = cfg.fine_tau;
    m.delta = cfg.fine_delta;
    m.lambda1 = cfg.fine_lambda1;
    m.lambda2 = cfg.fine_lambda2;
    m.alpha = cfg.fine_alpha;
    m.beta_w = cfg.fine_beta;
    m.validate();
    return m;
}

std::vector<LabeledSequence> load_coarse_dataset(const std::vector<ManifestEntry>& entries) {
    std::vector<LabeledSequence> out;
    out.reserve(entries.size());
    for (const ManifestEntry& e : entries) {
        LabeledSequence s;
        s.id = e.id;
        s.features = read_feature_file(e.feature_path);
        check_frame_count(e, s.features.rows);
        s.label = e.video_label;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<FineSample> load_fine_dataset(const std::vector<ManifestEntry>& entries,
                                          const ClassSet& classes, bool anomalous_only) {
    std::vector<FineSample> out;
    for (const ManifestEntry& e : entries) {
        if (anomalous_only && e.video_label == 0) continue;
        FineSample s;
        s.id = e.id;
        if (e.fine_feature_path) {
            s.features = read_feature_file(*e.fine_feature_path);
        } else {
            s.features = read_feature_file(e.feature_path);
            // Frame annotations describe the coarse features only.
            check_frame_count(e, s.features.rows);
        }
        s.class_index = classes.index_of(e.class_label);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<VideoInput> load_video_inputs(const std::vector<ManifestEntry>& entries) {
    std::vector<VideoInput> out;
    out.reserve(entries.size());
    for (const ManifestEntry& e : entries) {
        VideoInput v;
        v.id = e.id;
        v.features = read_feature_file(e.feature_path);
        check_frame_count(e, v.features.rows);
        if (e.fine_feature_path) v.fine_features = read_feature_file(*e.fine_feature_path);
        out.push_back(std::move(v));
    }
    return out;
}

PipelineArtifacts run_full_pipeline(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    RunConfig c = cfg.normalized();
    fs::path out(out_dir);
    fs::create_directories(out);

    PipelineArtifacts art;
    art.data_dir = (out / "data").string();
    SyntheticDataset ds = gen_synthetic(c.synth, art.data_dir);

    std::vector<LabeledSequence> train = load_coarse_dataset(ds.train);
    AfedTrainResult teacher = train_afed(train, c.teacher);
    art.teacher_path = (out / "model.tcvt").string();
    teacher.model.save(art.teacher_path);

    DistillResult distilled = distill(teacher.model, train, c.distill, c.bo);
    art.student_path = (out / "student.tcvt").string();
    distilled.student.save(art.student_path);
    art.trace_path = (out / "bo_trace.csv").string();
    write_bo_trace_csv(art.trace_path, distilled.trace);
    art.t_opt = distilled.t_opt;

    std::vector<FineSample> fine_train = load_fine_dataset(ds.train, c.synth.classes, true);
    EmbeddingProvider provider = EmbeddingProvider::synthetic(c.synth.dim, c.seed);
    FineGrainedModel init = fine_model_from_config(c, c.synth.dim, c.synth.classes);
    FineTrainResult fine = train_fine(fine_train, provider, init, c.fine);
    art.fine_path = (out / "fine.tcvt").string();
    fine.model.save(art.fine_path);

    StageModels models;
    models.student = distilled.student;
    models.fine = fine.model;
    models.provider = provider;
    StageReport stage = run_two_stage(c, models, load_video_inputs(ds.test));
    art.fine_calls = stage.fine_calls;

    std::vector<PredictionRecord> preds = predictions_from_report(stage);
    art.predictions_path = (out / "predictions.jsonl").string();
    write_predictions(art.predictions_path, preds);

    art.report = eval_command(ds.test, preds, c.synth.classes);
    art.report_path = (out / "report.json").string();
    std::ofstream rep(art.report_path, std::ios::trunc);
    if (!rep) throw validation_error("cannot open report for writing: " + art.report_path);
    rep << art.report.to_json_text();
    if (!rep) throw validation_error("write failed: " + art.report_path);
    return art;
}

}  // namespace tcvads
