#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "tcvads/distill.hpp"
#include "tcvads/errors.hpp"
#include "tcvads/feature_io.hpp"
#include "tcvads/numerics.hpp"
#include "tcvads/pipeline.hpp"
#include "tcvads/rng.hpp"
#include "support.hpp"

using namespace tcvads;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("tcvads_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

ClassSet three_classes() { return ClassSet::from_json_text(R"(["fights", "riots", "*normal"])"); }

// Small enough that the full pipeline runs in seconds.
RunConfig small_config() {
    RunConfig cfg;
    cfg.seed = 5;
    cfg.synth.classes = three_classes();
    cfg.synth.train_per_class = 4;
    cfg.synth.test_per_class = 2;
    cfg.synth.frames = 16;
    cfg.synth.dim = 8;
    cfg.synth.burst_len = 6;
    cfg.synth.separation = 2.5;
    cfg.synth.noise = 0.4;
    cfg.teacher.epochs = 8;
    cfg.teacher.learning_rate = 0.08;
    cfg.teacher.batch_size = 4;
    cfg.teacher.chunk_length = 16;
    cfg.teacher.topk_fraction = 0.25;
    cfg.distill.lambda = 0.3;
    cfg.distill.epochs = 6;
    cfg.distill.learning_rate = 0.1;
    cfg.distill.batch_size = 4;
    cfg.distill.hidden = 8;
    cfg.distill.probe_epochs = 2;
    cfg.distill.chunk_length = 16;
    cfg.bo.n_init = 3;
    cfg.bo.n_iter = 4;
    cfg.bo.grid_resolution = 64;
    cfg.fine.epochs = 6;
    cfg.fine.learning_rate = 0.05;
    cfg.fine.batch_size = 4;
    cfg.fine_learnable = 4;
    return cfg;
}

// Manifest entry over an unread dummy feature file; enough for eval_command.
ManifestEntry entry_for_eval(const std::string& id, const std::string& cls, int label) {
    ManifestEntry e;
    e.id = id;
    e.feature_path = id + ".vfea";
    e.video_label = label;
    e.class_label = cls;
    return e;
}

PredictionRecord pred(const std::string& id, double score) {
    PredictionRecord r;
    r.id = id;
    r.video_score = score;
    return r;
}

}  // namespace

TEST_CASE("run config: defaults survive a JSON round trip") {
    RunConfig a;
    RunConfig b = RunConfig::from_json_text(a.to_json_text());
    CHECK(b.seed == a.seed);
    CHECK(b.gate_threshold == a.gate_threshold);
    CHECK(b.partitions == a.partitions);
    CHECK(b.synth.classes.labels == a.synth.classes.labels);
    CHECK(b.synth.classes.normal_index == a.synth.classes.normal_index);
    CHECK(b.synth.train_per_class == a.synth.train_per_class);
    CHECK(b.synth.frames == a.synth.frames);
    CHECK(b.synth.dim == a.synth.dim);
    CHECK(b.synth.separation == a.synth.separation);
    CHECK(b.teacher.learning_rate == a.teacher.learning_rate);
    CHECK(b.teacher.topk_fraction == a.teacher.topk_fraction);
    CHECK(b.distill.lambda == a.distill.lambda);
    CHECK(b.distill.hidden == a.distill.hidden);
    CHECK(b.bo.t_min == a.bo.t_min);
    CHECK(b.bo.grid_resolution == a.bo.grid_resolution);
    CHECK(b.fine.learning_rate == a.fine.learning_rate);
    CHECK(b.fine_tau == a.fine_tau);
    CHECK(b.fine_delta == a.fine_delta);
    CHECK(b.fine_lambda1 == a.fine_lambda1);
    CHECK(b.fine_lambda2 == a.fine_lambda2);
    CHECK(b.fine_alpha == a.fine_alpha);
    CHECK(b.fine_beta == a.fine_beta);
    CHECK(b.fine_learnable == a.fine_learnable);

    RunConfig c = small_config();
    RunConfig d = RunConfig::from_json_text(c.to_json_text());
    CHECK(d.to_json_text() == c.to_json_text());
}

TEST_CASE("run config: partial JSON overrides only the named keys") {
    RunConfig cfg = RunConfig::from_json_text(
        R"({"seed": 11, "synth": {"dim": 12}, "fine": {"tau": 0.2}})");
    CHECK(cfg.seed == 11);
    CHECK(cfg.synth.dim == 12);
    CHECK(cfg.fine_tau == 0.2);
    // Untouched fields keep their defaults.
    RunConfig dflt;
    CHECK(cfg.gate_threshold == dflt.gate_threshold);
    CHECK(cfg.synth.frames == dflt.synth.frames);
    CHECK(cfg.synth.classes.labels == dflt.synth.classes.labels);
    CHECK(cfg.fine_delta == dflt.fine_delta);
    CHECK(cfg.distill.lambda == dflt.distill.lambda);

    RunConfig custom = RunConfig::from_json_text(
        R"({"synth": {"classes": ["*calm", "storm"]}, "gate_threshold": 0.25})");
    CHECK(custom.synth.classes.labels == std::vector<std::string>{"calm", "storm"});
    CHECK(custom.synth.classes.normal_index == 0);
    CHECK(custom.gate_threshold == 0.25);
}

TEST_CASE("run config: malformed input is rejected with the offender named") {
    CHECK_THROWS_AS(RunConfig::from_json_text("not json"), validation_error);
    CHECK_THROWS_AS(RunConfig::from_json_text("[1, 2]"), validation_error);
    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"sede": 7})"),
                         "config: unknown key \"sede\"", validation_error);
    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"synth": {"dims": 4}})"),
                         "config.synth: unknown key \"dims\"", validation_error);
    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"fine": {"gamma": 1.0}})"),
                         "config.fine: unknown key \"gamma\"", validation_error);
    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"seed": -3})"),
                         "config.seed must be a nonnegative integer", validation_error);
    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"gate_threshold": "half"})"),
                         "config.gate_threshold must be a number", validation_error);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"teacher": 3})"), validation_error);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"gate_threshold": 1.5})"), validation_error);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"partitions": 0})"), validation_error);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"synth": {"classes": ["a", "b"]}})"),
                    validation_error);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"synth": {"separation": -1.0}})"),
                    validation_error);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"fine": {"tau": 0.0}})"), validation_error);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"fine": {"delta": 1.5}})"), validation_error);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"bo": {"n_init": 1}})"), validation_error);
}

TEST_CASE("run config: from_file reads the same shape") {
    std::string dir = temp_dir("cfg");
    std::string path = dir + "/run.json";
    RunConfig a = small_config();
    {
        std::ofstream out(path);
        out << a.to_json_text();
    }
    RunConfig b = RunConfig::from_file(path);
    CHECK(b.to_json_text() == a.to_json_text());
    CHECK_THROWS_AS(RunConfig::from_file(dir + "/absent.json"), validation_error);
}

TEST_CASE("run config: normalized pushes seed and partitions into every stage") {
    RunConfig cfg = small_config();
    cfg.seed = 99;
    cfg.partitions = 4;
    RunConfig n = cfg.normalized();
    CHECK(n.synth.seed == 99);
    CHECK(n.teacher.seed == 99);
    CHECK(n.distill.seed == 99);
    CHECK(n.fine.seed == 99);
    CHECK(n.teacher.partitions == 4);
    CHECK(n.distill.partitions == 4);
    CHECK(n.fine.partitions == 4);
    CHECK(n.seed == 99);
    CHECK(n.gate_threshold == cfg.gate_threshold);
}

TEST_CASE("manifest loaders read features, labels, and stage-specific paths") {
    std::string dir = temp_dir("loaders");
    RunConfig cfg = small_config();
    SyntheticDataset ds = gen_synthetic(cfg.normalized().synth, dir);

    std::vector<LabeledSequence> coarse = load_coarse_dataset(ds.train);
    REQUIRE(coarse.size() == ds.train.size());
    for (size_t i = 0; i < coarse.size(); ++i) {
        CHECK(coarse[i].id == ds.train[i].id);
        CHECK(coarse[i].label == ds.train[i].video_label);
        CHECK(coarse[i].features.rows == cfg.synth.frames);
        CHECK(coarse[i].features.cols == cfg.synth.dim);
    }

    ClassSet classes = cfg.synth.classes;
    std::vector<FineSample> fine = load_fine_dataset(ds.train, classes, true);
    size_t anomalous = 0;
    for (const ManifestEntry& e : ds.train) anomalous += e.video_label == 1;
    REQUIRE(fine.size() == anomalous);
    for (const FineSample& s : fine) CHECK(classes.labels[s.class_index] != "normal");
    CHECK(load_fine_dataset(ds.train, classes, false).size() == ds.train.size());

    // A stage-specific feature path wins over the shared one.
    Rng rng(31);
    Matrix alt = testsup::random_matrix(rng, 5, cfg.synth.dim);
    std::string alt_path = dir + "/alt.vfea";
    write_feature_file(alt_path, alt);
    std::vector<ManifestEntry> patched = ds.train;
    patched[0].fine_feature_path = alt_path;
    std::vector<FineSample> swapped = load_fine_dataset(patched, classes, false);
    CHECK(swapped[0].features.rows == 5);
    CHECK(swapped[0].features.data == read_feature_file(alt_path).data);

    std::vector<VideoInput> inputs = load_video_inputs(ds.test);
    REQUIRE(inputs.size() == ds.test.size());
    for (size_t i = 0; i < inputs.size(); ++i) {
        CHECK(inputs[i].id == ds.test[i].id);
        CHECK_FALSE(inputs[i].fine_features.has_value());
    }
    std::vector<ManifestEntry> patched_test = ds.test;
    patched_test[0].fine_feature_path = alt_path;
    CHECK(load_video_inputs(patched_test)[0].fine_features.has_value());
}

TEST_CASE("two-stage gate: threshold semantics and decision contents") {
    ClassSet classes = three_classes();
    const size_t dim = 6;
    StageModels models;
    models.student = QacmStudent::seeded(dim, 5, 41);
    models.fine = FineGrainedModel::seeded(dim, classes, 42, 3);
    models.provider = EmbeddingProvider::synthetic(dim, 43);

    Rng rng(44);
    std::vector<VideoInput> videos;
    for (size_t i = 0; i < 6; ++i)
        videos.push_back({"v" + std::to_string(i), testsup::random_matrix(rng, 10, dim), {}});

    RunConfig cfg;
    cfg.gate_threshold = 0.0;
    StageReport all_fine = run_two_stage(cfg, models, videos);
    REQUIRE(all_fine.decisions.size() == videos.size());
    CHECK(all_fine.fine_calls == videos.size());
    double max_score = 0.0;
    for (size_t i = 0; i < videos.size(); ++i) {
        const StageDecision& d = all_fine.decisions[i];
        CHECK(d.id == videos[i].id);
        CHECK(d.anomalous);
        CHECK(d.coarse_score == sigmoid(student_forward(models.student, videos[i].features).logit));
        CHECK(d.frame_scores.size() == 10);
        REQUIRE(d.fine_probs.has_value());
        CHECK(d.fine_probs->size() == classes.size());
        size_t best = 0;
        for (size_t c = 1; c < d.fine_probs->size(); ++c)
            if ((*d.fine_probs)[c] > (*d.fine_probs)[best]) best = c;
        CHECK(*d.fine_class == classes.labels[best]);
        max_score = std::max(max_score, d.coarse_score);
    }

    // Just above the maximum score nothing crosses.
    cfg.gate_threshold = std::min(1.0, max_score + 1e-9);
    StageReport none = run_two_stage(cfg, models, videos);
    CHECK(none.fine_calls == 0);
    for (const StageDecision& d : none.decisions) {
        CHECK_FALSE(d.anomalous);
        CHECK_FALSE(d.fine_probs.has_value());
        CHECK_FALSE(d.fine_class.has_value());
    }

    size_t prev = videos.size() + 1;
    for (double gate : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        cfg.gate_threshold = gate;
        StageReport r = run_two_stage(cfg, models, videos);
        CHECK(r.fine_calls <= prev);
        prev = r.fine_calls;
        size_t crossings = 0;
        for (const StageDecision& d : r.decisions) crossings += d.anomalous;
        CHECK(crossings == r.fine_calls);
    }
}

TEST_CASE("two-stage gate: crossing without a fine model names the video") {
    StageModels models;
    models.student = QacmStudent::seeded(4, 3, 51);
    Rng rng(52);
    std::vector<VideoInput> videos;
    videos.push_back({"clip7", testsup::random_matrix(rng, 8, 4), {}});
    RunConfig cfg;
    cfg.gate_threshold = 0.0;
    CHECK_THROWS_WITH_AS(run_two_stage(cfg, models, videos),
                         "video clip7 crossed the gate but no fine model is loaded",
                         validation_error);
    // Below the gate the fine model is never needed.
    cfg.gate_threshold = 1.0;
    CHECK(run_two_stage(cfg, models, videos).fine_calls == 0);
}

TEST_CASE("two-stage gate: fine stage scores the fine features when present") {
    ClassSet classes = three_classes();
    const size_t dim = 6;
    StageModels models;
    models.student = QacmStudent::seeded(dim, 5, 61);
    models.fine = FineGrainedModel::seeded(dim, classes, 62, 3);
    models.provider = EmbeddingProvider::synthetic(dim, 63);

    Rng rng(64);
    VideoInput v;
    v.id = "swap";
    v.features = testsup::random_matrix(rng, 9, dim);
    v.fine_features = testsup::random_matrix(rng, 12, dim);

    RunConfig cfg;
    cfg.gate_threshold = 0.0;
    StageReport r = run_two_stage(cfg, models, {v});
    REQUIRE(r.decisions[0].fine_probs.has_value());
    std::vector<double> on_fine = fine_predict(*models.fine, *models.provider, *v.fine_features);
    std::vector<double> on_coarse = fine_predict(*models.fine, *models.provider, v.features);
    CHECK(*r.decisions[0].fine_probs == on_fine);
    CHECK(*r.decisions[0].fine_probs != on_coarse);
}

TEST_CASE("prediction files: round trip and per-line validation") {
    std::string dir = temp_dir("preds");
    std::string path = dir + "/predictions.jsonl";

    std::vector<PredictionRecord> records;
    PredictionRecord full;
    full.id = "a";
    full.video_score = 0.75;
    full.frame_scores = std::vector<double>{0.1, 0.9, 0.5};
    full.fine_class = "fights";
    records.push_back(full);
    records.push_back(pred("b", 0.25));
    write_predictions(path, records);

    std::vector<PredictionRecord> back = read_predictions(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "a");
    CHECK(back[0].video_score == 0.75);
    CHECK(*back[0].frame_scores == *full.frame_scores);
    CHECK(*back[0].fine_class == "fights");
    CHECK(back[1].id == "b");
    CHECK_FALSE(back[1].frame_scores.has_value());
    CHECK_FALSE(back[1].fine_class.has_value());

    // Writing again yields identical bytes.
    std::string again = dir + "/again.jsonl";
    write_predictions(again, back);
    CHECK(file_bytes(again) == file_bytes(path));

    auto write_line = [&](const std::string& line) {
        std::string p = dir + "/bad.jsonl";
        std::ofstream out(p, std::ios::trunc);
        out << line << "\n";
        out.close();
        return p;
    };
    CHECK_THROWS_AS(read_predictions(dir + "/absent.jsonl"), validation_error);
    CHECK_THROWS_AS(read_predictions(write_line("{oops")), validation_error);
    CHECK_THROWS_AS(read_predictions(write_line(R"({"id": "a"})")), validation_error);
    CHECK_THROWS_AS(read_predictions(write_line(R"({"id": "a", "video_score": 0.5, "x": 1})")),
                    validation_error);
    CHECK_THROWS_AS(
        read_predictions(write_line(R"({"id": "a", "video_score": 0.5, "frame_scores": "hi"})")),
        validation_error);
}

TEST_CASE("eval: perfect predictions score 1.0 on every metric") {
    ClassSet classes = three_classes();
    ManifestEntry anom = entry_for_eval("a", "fights", 1);
    anom.frame_labels = std::vector<int>{0, 0, 1, 1, 1, 1, 0, 0};
    anom.frame_class_spans = std::vector<FrameClassSpan>{{2, 6, "fights"}};
    ManifestEntry norm = entry_for_eval("n", "normal", 0);
    norm.frame_labels = std::vector<int>(8, 0);

    PredictionRecord pa = pred("a", 0.9);
    pa.frame_scores = std::vector<double>{0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
    pa.fine_class = "fights";
    PredictionRecord pn = pred("n", 0.1);
    pn.frame_scores = std::vector<double>(8, 0.0);

    MetricReport r = eval_command({anom, norm}, {pa, pn}, classes);
    CHECK(r.ap == 1.0);
    CHECK(r.auc == 1.0);
    REQUIRE(r.ano_auc_value.has_value());
    CHECK(*r.ano_auc_value == 1.0);
    REQUIRE(r.map_values.has_value());
    REQUIRE(r.map_values->size() == 6);
    for (const auto& [key, value] : *r.map_values) CHECK(value == 1.0);

    // Inverted video scores invert the ranking.
    ManifestEntry bare_a = entry_for_eval("a", "fights", 1);
    ManifestEntry bare_n = entry_for_eval("n", "normal", 0);
    MetricReport swapped =
        eval_command({bare_a, bare_n}, {pred("a", 0.1), pred("n", 0.9)}, classes);
    CHECK(swapped.auc == 0.0);
}

TEST_CASE("eval: ano_auc ignores unlabeled frames of anomalous videos") {
    ClassSet classes = three_classes();
    ManifestEntry anom = entry_for_eval("a", "fights", 1);
    anom.frame_labels = std::vector<int>{1, 1, 0, 0};
    ManifestEntry norm = entry_for_eval("n", "normal", 0);
    norm.frame_labels = std::vector<int>(4, 0);

    PredictionRecord pa = pred("a", 0.9);
    // The anomalous video's unlabeled tail outranks its labeled burst; only
    // the normal video supplies negatives, so the restricted AUC stays 1.
    pa.frame_scores = std::vector<double>{0.8, 0.8, 0.95, 0.95};
    PredictionRecord pn = pred("n", 0.2);
    pn.frame_scores = std::vector<double>(4, 0.1);

    MetricReport r = eval_command({anom, norm}, {pa, pn}, classes);
    CHECK(*r.ano_auc_value == 1.0);
}

TEST_CASE("eval: segments never merge across video boundaries") {
    ClassSet classes = three_classes();
    // High frames at the end of one video and the start of the next; a merged
    // run would match neither span cleanly.
    ManifestEntry a = entry_for_eval("a", "fights", 1);
    a.frame_labels = std::vector<int>{0, 0, 0, 0, 0, 0, 1, 1};
    a.frame_class_spans = std::vector<FrameClassSpan>{{6, 8, "fights"}};
    ManifestEntry b = entry_for_eval("b", "fights", 1);
    b.frame_labels = std::vector<int>{1, 1, 0, 0, 0, 0, 0, 0};
    b.frame_class_spans = std::vector<FrameClassSpan>{{0, 2, "fights"}};

    ManifestEntry n = entry_for_eval("n", "normal", 0);
    n.frame_labels = std::vector<int>(8, 0);

    PredictionRecord pa = pred("a", 0.9);
    pa.frame_scores = std::vector<double>{0, 0, 0, 0, 0, 0, 1, 1};
    pa.fine_class = "fights";
    PredictionRecord pb = pred("b", 0.8);
    pb.frame_scores = std::vector<double>{1, 1, 0, 0, 0, 0, 0, 0};
    pb.fine_class = "fights";
    PredictionRecord pn = pred("n", 0.1);
    pn.frame_scores = std::vector<double>(8, 0.0);

    MetricReport r = eval_command({a, b, n}, {pa, pb, pn}, classes);
    for (const auto& [key, value] : *r.map_values) CHECK(value == 1.0);
}

TEST_CASE("eval: coverage and annotation errors name the offenders") {
    ClassSet classes = three_classes();
    ManifestEntry a = entry_for_eval("a", "fights", 1);
    ManifestEntry n = entry_for_eval("n", "normal", 0);

    CHECK_THROWS_WITH_AS(eval_command({a, n}, {pred("a", 0.9)}, classes),
                         "predictions missing for: n", validation_error);
    CHECK_THROWS_WITH_AS(eval_command({a, n}, {}, classes), "predictions missing for: a, n",
                         validation_error);
    CHECK_THROWS_WITH_AS(
        eval_command({a, n}, {pred("a", 0.9), pred("a", 0.8), pred("n", 0.1)}, classes),
        "duplicate prediction for id a", validation_error);

    ManifestEntry labeled = a;
    labeled.frame_labels = std::vector<int>{1, 0};
    CHECK_THROWS_WITH_AS(
        eval_command({labeled, n}, {pred("a", 0.9), pred("n", 0.1)}, classes),
        "prediction for a lacks frame scores but the manifest has frame annotations",
        validation_error);

    PredictionRecord short_frames = pred("a", 0.9);
    short_frames.frame_scores = std::vector<double>{1.0};
    CHECK_THROWS_AS(eval_command({labeled, n}, {short_frames, pred("n", 0.1)}, classes),
                    validation_error);

    PredictionRecord bad_class = pred("a", 0.9);
    bad_class.frame_scores = std::vector<double>{1.0, 0.0};
    bad_class.fine_class = "storms";
    CHECK_THROWS_WITH_AS(eval_command({labeled, n}, {bad_class, pred("n", 0.1)}, classes),
                         "prediction for a names unknown class \"storms\"", validation_error);

    // Manifest invariants are enforced on the way in.
    ManifestEntry inconsistent = entry_for_eval("x", "normal", 1);
    CHECK_THROWS_AS(eval_command({inconsistent}, {pred("x", 0.5)}, classes), validation_error);
}

TEST_CASE("eval: report JSON carries nulls without frame annotations") {
    ClassSet classes = three_classes();
    ManifestEntry a = entry_for_eval("a", "fights", 1);
    ManifestEntry n = entry_for_eval("n", "normal", 0);
    MetricReport r = eval_command({a, n}, {pred("a", 0.9), pred("n", 0.1)}, classes);
    CHECK(r.ap == 1.0);
    CHECK(r.auc == 1.0);
    CHECK_FALSE(r.ano_auc_value.has_value());
    CHECK_FALSE(r.map_values.has_value());

    nlohmann::json j = nlohmann::json::parse(r.to_json_text());
    REQUIRE(j.is_object());
    CHECK(j.size() == 4);
    CHECK(j.at("ap") == 1.0);
    CHECK(j.at("auc") == 1.0);
    CHECK(j.at("ano_auc").is_null());
    CHECK(j.at("map_at_iou").is_null());

    MetricReport full;
    full.ap = 0.5;
    full.auc = 0.25;
    full.ano_auc_value = 0.75;
    full.map_values = std::map<std::string, double>{{"0.1", 1.0}, {"0.2", 1.0}, {"0.3", 0.5},
                                                    {"0.4", 0.5}, {"0.5", 0.0}, {"avg", 0.6}};
    nlohmann::json jf = nlohmann::json::parse(full.to_json_text());
    CHECK(jf.at("ano_auc") == 0.75);
    REQUIRE(jf.at("map_at_iou").is_object());
    CHECK(jf.at("map_at_iou").size() == 6);
    CHECK(jf.at("map_at_iou").at("avg") == 0.6);
    CHECK(jf.at("map_at_iou").at("0.3") == 0.5);
}

TEST_CASE("full pipeline: identical bytes across runs and partition counts") {
    RunConfig cfg = small_config();
    std::string dir_a = temp_dir("pipe_a");
    std::string dir_b = temp_dir("pipe_b");
    std::string dir_p = temp_dir("pipe_p");

    PipelineArtifacts a = run_full_pipeline(cfg, dir_a);
    PipelineArtifacts b = run_full_pipeline(cfg, dir_b);
    RunConfig split = cfg;
    split.partitions = 2;
    PipelineArtifacts p = run_full_pipeline(split, dir_p);

    for (const char* name : {"report.json", "model.tcvt", "student.tcvt", "fine.tcvt",
                             "predictions.jsonl", "bo_trace.csv"}) {
        CAPTURE(name);
        std::string bytes = file_bytes(dir_a + "/" + name);
        CHECK(bytes == file_bytes(dir_b + "/" + name));
        CHECK(bytes == file_bytes(dir_p + "/" + name));
    }

    // The trained separation shows up as usable rankings on the test split.
    CHECK(a.report.auc >= 0.8);
    CHECK(a.report.ap >= 0.8);
    REQUIRE(a.report.ano_auc_value.has_value());
    REQUIRE(a.report.map_values.has_value());
    CHECK(a.t_opt >= cfg.bo.t_min);
    CHECK(a.t_opt <= cfg.bo.t_max);
    CHECK(a.fine_calls <= 6);
    CHECK(b.fine_calls == a.fine_calls);

    // The saved checkpoints drive the same two-stage decisions.
    QacmStudent student = QacmStudent::load(a.student_path);
    FineGrainedModel fine = FineGrainedModel::load(a.fine_path);
    StageModels models;
    models.student = student;
    models.fine = fine;
    models.provider = EmbeddingProvider::synthetic(cfg.synth.dim, cfg.seed);
    std::vector<ManifestEntry> test_entries = read_manifest(dir_a + "/data/test.jsonl");
    std::vector<VideoInput> inputs = load_video_inputs(test_entries);
    StageReport replay = run_two_stage(cfg.normalized(), models, inputs);
    std::vector<PredictionRecord> again = predictions_from_report(replay);
    std::string replay_path = dir_a + "/replay.jsonl";
    write_predictions(replay_path, again);
    CHECK(file_bytes(replay_path) == file_bytes(a.predictions_path));

    // Gate sweep on the trained models: monotone, and zero above the maximum.
    double max_score = 0.0;
    for (const StageDecision& d : replay.decisions)
        max_score = std::max(max_score, d.coarse_score);
    size_t prev = inputs.size() + 1;
    RunConfig sweep = cfg.normalized();
    for (double gate : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        sweep.gate_threshold = gate;
        size_t calls = run_two_stage(sweep, models, inputs).fine_calls;
        CHECK(calls <= prev);
        prev = calls;
    }
    sweep.gate_threshold = std::min(1.0, max_score + 1e-9);
    CHECK(run_two_stage(sweep, models, inputs).fine_calls == 0);
}
