#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tcvads/class_set.hpp"
#include "tcvads/crossmodal.hpp"
#include "tcvads/distill.hpp"
#include "tcvads/gp_bo.hpp"
#include "tcvads/manifest.hpp"
#include "tcvads/matrix.hpp"
#include "tcvads/synthetic.hpp"
#include "tcvads/time_mixer.hpp"

namespace tcvads {

// Master configuration for an end-to-end run. JSON shape (every key
// optional, unknown keys rejected):
//
//   {
//     "seed": 7,
//     "gate_threshold": 0.5,
//     "partitions": 1,
//     "synth":   {"classes": ["fights", "*normal", ...], "train_per_class": 10,
//                 "test_per_class": 4, "frames": 64, "dim": 32, "burst_len": 16,
//                 "separation": 2.0, "noise": 0.5},
//     "teacher": {"learning_rate": 0.05, "epochs": 30, "batch_size": 8,
//                 "chunk_length": 256, "topk_fraction": 0.0625},
//     "distill": {"lambda": 0.5, "epochs": 40, "learning_rate": 0.1,
//                 "batch_size": 8, "hidden": 16, "probe_epochs": 5,
//                 "chunk_length": 256},
//     "bo":      {"t_min": 0.5, "t_max": 5.0, "n_init": 5, "n_iter": 30,
//                 "grid_resolution": 256},
//     "fine":    {"learning_rate": 0.05, "epochs": 40, "batch_size": 8,
//                 "chunk_length": 0, "tau": 0.07, "delta": 0.5,
//                 "lambda1": 5e-4, "lambda2": 6e-4, "alpha": 1.2,
//                 "beta": 0.8, "learnable_count": 40}
//   }
//
// The top-level seed and partition count are the single source for every
// stage; the per-stage seed/partitions fields are overwritten when the
// pipeline runs (see normalized()).
struct RunConfig {
    uint64_t seed = 7;
    double gate_threshold = 0.5;  // coarse score >= threshold triggers the fine stage
    int partitions = 1;
    SyntheticSpec synth;
    TrainConfig teacher;
    DistillConfig distill;
    BoConfig bo;
    FineTrainConfig fine;
    // Fine-stage model hyperparameters, applied to the model before training.
    double fine_tau = 0.07;
    double fine_delta = 0.5;
    double fine_lambda1 = 5e-4;
    double fine_lambda2 = 6e-4;
    double fine_alpha = 1.2;
    double fine_beta = 0.8;
    size_t fine_learnable = 40;

    void validate() const;

    // Copy with the master seed and partition count pushed into every stage
    // config.
    RunConfig normalized() const;

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
    std::string to_json_text() const;
};

struct VideoInput {
    std::string id;
    Matrix features;                     // drives the coarse gate
    std::optional<Matrix> fine_features; // fine stage falls back to features when unset
};

// Inference-time models. The teacher never appears here: deployment runs the
// student gate plus the optional fine classifier.
struct StageModels {
    QacmStudent student;
    std::optional<FineGrainedModel> fine;
    std::optional<EmbeddingProvider> provider;
};

struct StageDecision {
    std::string id;
    double coarse_score = 0.0;         // sigmoid of the student video logit
    std::vector<double> frame_scores;  // sigmoid of the student frame logits
    bool anomalous = false;
    std::optional<std::vector<double>> fine_probs;  // set only when the gate fired
    std::optional<std::string> fine_class;          // argmax label of fine_probs
};

struct StageReport {
    std::vector<StageDecision> decisions;  // input order
    size_t fine_calls = 0;
};

// Coarse gate then conditional fine classification. A video whose coarse
// score reaches cfg.gate_threshold crosses the gate; crossing with no fine
// model or provider loaded is a validation error naming the video.
StageReport run_two_stage(const RunConfig& cfg, const StageModels& models,
                          const std::vector<VideoInput>& videos);

// One scored video in a predictions JSON-lines file. Keys: id, video_score,
// optional frame_scores, optional fine_class.
struct PredictionRecord {
    std::string id;
    double video_score = 0.0;
    std::optional<std::vector<double>> frame_scores;
    std::optional<std::string> fine_class;
};

std::vector<PredictionRecord> predictions_from_report(const StageReport& report);
void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(const std::string& path);

// Video-level AP and AUC, plus frame-level metrics where the manifest carries
// frame annotations. JSON shape:
//   {"ano_auc": x | null, "ap": x, "auc": x,
//    "map_at_iou": {"0.1": x, ..., "0.5": x, "avg": x} | null}
struct MetricReport {
    double ap = 0.0;
    double auc = 0.0;
    std::optional<double> ano_auc_value;
    std::optional<std::map<std::string, double>> map_values;

    std::string to_json_text() const;
};

// Scores predictions against the manifest. Every manifest entry needs a
// prediction (missing ids are listed in the error); entries with frame
// annotations need frame scores. Predicted temporal segments are maximal
// frame runs with score >= segment_threshold, labeled with the record's fine
// class (the normal class when absent); videos are laid end to end on one
// timeline so segments never cross video boundaries.
MetricReport eval_command(const std::vector<ManifestEntry>& entries,
                          const std::vector<PredictionRecord>& predictions,
                          const ClassSet& classes, double segment_threshold = 0.5);

// Seeded fine-stage model with the config's hyperparameters applied.
FineGrainedModel fine_model_from_config(const RunConfig& cfg, size_t dim,
                                        const ClassSet& classes);

// Manifest loaders. Feature files are read from entry.feature_path; the fine
// loader prefers entry.fine_feature_path when set and can restrict to
// anomalous videos.
std::vector<LabeledSequence> load_coarse_dataset(const std::vector<ManifestEntry>& entries);
std::vector<FineSample> load_fine_dataset(const std::vector<ManifestEntry>& entries,
                                          const ClassSet& classes, bool anomalous_only);
std::vector<VideoInput> load_video_inputs(const std::vector<ManifestEntry>& entries);

struct PipelineArtifacts {
    std::string data_dir;
    std::string teacher_path;
    std::string student_path;
    std::string trace_path;
    std::string fine_path;
    std::string predictions_path;
    std::string report_path;
    double t_opt = 1.0;
    size_t fine_calls = 0;
    MetricReport report;
};

// Full run under out_dir: synthetic data, teacher training, distillation
// (model.tcvt, student.tcvt, bo_trace.csv), fine training on the anomalous
// train videos (fine.tcvt), two-stage inference over the test split
// (predictions.jsonl), and the metric report (report.json). Deterministic for
// a fixed config: artifact bytes do not depend on out_dir or the partition
// count.
PipelineArtifacts run_full_pipeline(const RunConfig& cfg, const std::string& out_dir);

}  // namespace tcvads
