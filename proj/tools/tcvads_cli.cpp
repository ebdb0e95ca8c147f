// Command-line front end. Exit codes: 0 success, 2 validation error (bad
// flags, malformed inputs, coverage gaps), 3 numerical error (non-finite
// values, degenerate factorizations).

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tcvads/class_set.hpp"
#include "tcvads/conv_block.hpp"
#include "tcvads/crossmodal.hpp"
#include "tcvads/distill.hpp"
#include "tcvads/errors.hpp"
#include "tcvads/feature_io.hpp"
#include "tcvads/gp_bo.hpp"
#include "tcvads/manifest.hpp"
#include "tcvads/pipeline.hpp"
#include "tcvads/rng.hpp"
#include "tcvads/synthetic.hpp"
#include "tcvads/time_mixer.hpp"

namespace fs = std::filesystem;
using namespace tcvads;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out = "out";
    uint64_t seed = 0;
    int partitions = 0;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--config", c.config_path, "JSON run configuration");
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
    cmd->add_option("--seed", c.seed, "override the config seed");
    cmd->add_option("--partitions", c.partitions, "override the config partition count");
}

// Flag overrides win over the config file; the result is validated and the
// master seed/partitions are pushed into every stage.
RunConfig load_config(const CLI::App* cmd, const CommonOpts& c) {
    RunConfig cfg =
        c.config_path.empty() ? RunConfig{} : RunConfig::from_file(c.config_path);
    if (cmd->count("--seed")) cfg.seed = c.seed;
    if (cmd->count("--partitions")) cfg.partitions = c.partitions;
    cfg.validate();
    return cfg.normalized();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string under(const std::string& dir, const char* name) {
    fs::create_directories(dir);
    return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw validation_error("cannot open for writing: " + path);
    out << text;
    if (!out) throw validation_error("write failed: " + path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage video anomaly detection toolkit"};
    app.require_subcommand(1);

    // gen-synth
    auto* gen_cmd = app.add_subcommand("gen-synth", "generate a synthetic labeled dataset");
    CommonOpts gen_common;
    add_common(gen_cmd, gen_common);
    gen_cmd->callback([&] {
        RunConfig cfg = load_config(gen_cmd, gen_common);
        SyntheticDataset ds = gen_synthetic(cfg.synth, gen_common.out);
        std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size()
                  << " test videos under " << gen_common.out << "\n";
    });

    // train-coarse
    auto* coarse_cmd = app.add_subcommand("train-coarse", "train the temporal teacher");
    CommonOpts coarse_common;
    std::string coarse_train, coarse_classes;
    add_common(coarse_cmd, coarse_common);
    coarse_cmd->add_option("--train", coarse_train, "training manifest (JSON lines)")
        ->required();
    coarse_cmd->add_option("--classes", coarse_classes,
                           "class set JSON for manifest validation");
    coarse_cmd->callback([&] {
        RunConfig cfg = load_config(coarse_cmd, coarse_common);
        std::vector<ManifestEntry> entries = read_manifest(coarse_train);
        if (!coarse_classes.empty())
            validate_manifest(entries, ClassSet::from_json_text(slurp(coarse_classes)));
        AfedTrainResult r = train_afed(load_coarse_dataset(entries), cfg.teacher);
        std::string model_path = under(coarse_common.out, "model.tcvt");
        r.model.save(model_path);
        write_loss_history_csv(under(coarse_common.out, "coarse_loss.csv"), r.loss_history);
        std::cout << "trained on " << entries.size() << " videos for " << cfg.teacher.epochs
                  << " epochs, final loss " << r.loss_history.back() << "\n"
                  << "wrote " << model_path << "\n";
    });

    // distill
    auto* distill_cmd = app.add_subcommand("distill", "distill the teacher into the student");
    CommonOpts distill_common;
    std::string distill_train, distill_teacher;
    add_common(distill_cmd, distill_common);
    distill_cmd->add_option("--train", distill_train, "training manifest (JSON lines)")
        ->required();
    distill_cmd->add_option("--teacher", distill_teacher,
                            "teacher checkpoint (default <out>/model.tcvt)");
    distill_cmd->callback([&] {
        RunConfig cfg = load_config(distill_cmd, distill_common);
        std::string teacher_path = distill_teacher.empty()
                                       ? under(distill_common.out, "model.tcvt")
                                       : distill_teacher;
        EnhancedRwkv teacher = EnhancedRwkv::load(teacher_path);
        DistillResult r =
            distill(teacher, load_coarse_dataset(read_manifest(distill_train)), cfg.distill,
                    cfg.bo);
        std::string student_path = under(distill_common.out, "student.tcvt");
        r.student.save(student_path);
        write_bo_trace_csv(under(distill_common.out, "bo_trace.csv"), r.trace);
        write_loss_history_csv(under(distill_common.out, "distill_loss.csv"), r.loss_history);
        if (r.trace.empty())
            std::cout << "temperature search skipped (lambda 0)\n";
        else
            std::cout << "temperature " << r.t_opt << " picked in " << r.trace.size()
                      << " evaluations\n";
        std::cout << "wrote " << student_path << "\n";
    });

    // train-fine
    auto* fine_cmd = app.add_subcommand("train-fine", "train the fine-grained classifier");
    CommonOpts fine_common;
    std::string fine_train, fine_classes, fine_embeddings;
    add_common(fine_cmd, fine_common);
    fine_cmd->add_option("--train", fine_train, "training manifest (JSON lines)")->required();
    fine_cmd->add_option("--classes", fine_classes, "class set JSON ('*' marks normal)")
        ->required();
    fine_cmd->add_option("--embeddings", fine_embeddings,
                         "token embedding table (VFEA); synthetic embeddings when absent");
    fine_cmd->callback([&] {
        RunConfig cfg = load_config(fine_cmd, fine_common);
        ClassSet classes = ClassSet::from_json_text(slurp(fine_classes));
        std::vector<ManifestEntry> entries = read_manifest(fine_train);
        validate_manifest(entries, classes);
        std::vector<FineSample> data = load_fine_dataset(entries, classes, true);
        if (data.empty())
            throw validation_error("no anomalous training videos in " + fine_train);
        size_t dim = data.front().features.cols;
        EmbeddingProvider provider = fine_embeddings.empty()
                                         ? EmbeddingProvider::synthetic(dim, cfg.seed)
                                         : EmbeddingProvider::from_file(fine_embeddings);
        FineTrainResult r =
            train_fine(data, provider, fine_model_from_config(cfg, dim, classes), cfg.fine);
        std::string fine_path = under(fine_common.out, "fine.tcvt");
        r.model.save(fine_path);
        write_loss_history_csv(under(fine_common.out, "fine_loss.csv"), r.loss_history);
        std::cout << "trained on " << data.size() << " anomalous videos, final loss "
                  << r.loss_history.back() << "\n"
                  << "wrote " << fine_path << "\n";
    });

    // run
    auto* run_cmd = app.add_subcommand("run", "two-stage inference over a manifest");
    CommonOpts run_common;
    std::string run_test, run_student, run_fine, run_embeddings;
    add_common(run_cmd, run_common);
    run_cmd->add_option("--test", run_test, "manifest of videos to score")->required();
    run_cmd->add_option("--student", run_student,
                        "student checkpoint (default <out>/student.tcvt)");
    auto* fine_opt = run_cmd->add_option("--fine", run_fine, "fine classifier checkpoint");
    run_cmd->add_option("--embeddings", run_embeddings,
                        "token embedding table (VFEA); synthetic embeddings when absent")
        ->needs(fine_opt);
    run_cmd->callback([&] {
        RunConfig cfg = load_config(run_cmd, run_common);
        StageModels models;
        models.student = QacmStudent::load(
            run_student.empty() ? under(run_common.out, "student.tcvt") : run_student);
        if (!run_fine.empty()) {
            models.fine = FineGrainedModel::load(run_fine);
            models.provider = run_embeddings.empty()
                                  ? EmbeddingProvider::synthetic(models.fine->dim, cfg.seed)
                                  : EmbeddingProvider::from_file(run_embeddings);
        }
        std::vector<VideoInput> inputs = load_video_inputs(read_manifest(run_test));
        StageReport report = run_two_stage(cfg, models, inputs);
        std::string pred_path = under(run_common.out, "predictions.jsonl");
        write_predictions(pred_path, predictions_from_report(report));
        std::cout << "scored " << inputs.size() << " videos; fine stage ran "
                  << report.fine_calls << " times\n"
                  << "wrote " << pred_path << "\n";
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score stored predictions against a manifest");
    CommonOpts eval_common;
    std::string eval_test, eval_preds, eval_classes;
    double eval_segment_threshold = 0.5;
    add_common(eval_cmd, eval_common);
    eval_cmd->add_option("--test", eval_test, "manifest with ground truth")->required();
    eval_cmd->add_option("--predictions", eval_preds,
                         "predictions JSON lines (default <out>/predictions.jsonl)");
    eval_cmd->add_option("--classes", eval_classes, "class set JSON ('*' marks normal)")
        ->required();
    eval_cmd
        ->add_option("--segment-threshold", eval_segment_threshold,
                     "frame score cut for predicted segments")
        ->capture_default_str();
    eval_cmd->callback([&] {
        load_config(eval_cmd, eval_common);
        ClassSet classes = ClassSet::from_json_text(slurp(eval_classes));
        std::vector<PredictionRecord> preds = read_predictions(
            eval_preds.empty() ? under(eval_common.out, "predictions.jsonl") : eval_preds);
        MetricReport report = eval_command(read_manifest(eval_test), preds, classes,
                                           eval_segment_threshold);
        std::string report_path = under(eval_common.out, "report.json");
        write_text(report_path, report.to_json_text());
        std::cout << report.to_json_text() << "wrote " << report_path << "\n";
    });

    // saliency
    auto* sal_cmd = app.add_subcommand("saliency", "export input-gradient maps, one CSV per frame");
    CommonOpts sal_common;
    std::string sal_frames;
    size_t sal_height = 8, sal_width = 8, sal_count = 4;
    size_t sal_mid = 4, sal_out_ch = 2, sal_kernel = 3, sal_channel = 0;
    add_common(sal_cmd, sal_common);
    sal_cmd->add_option("--frames", sal_frames,
                        "VFEA whose rows are single-channel frames (height x width each); "
                        "seeded Gaussian frames when absent");
    sal_cmd->add_option("--height", sal_height, "frame height")->capture_default_str();
    sal_cmd->add_option("--width", sal_width, "synthetic frame width")->capture_default_str();
    sal_cmd->add_option("--count", sal_count, "synthetic frame count")->capture_default_str();
    sal_cmd->add_option("--mid-channels", sal_mid, "conv channel count")->capture_default_str();
    sal_cmd->add_option("--out-channels", sal_out_ch, "deconv channel count")
        ->capture_default_str();
    sal_cmd->add_option("--kernel", sal_kernel, "square kernel size (odd)")
        ->capture_default_str();
    sal_cmd->add_option("--output-channel", sal_channel, "channel whose sum is differentiated")
        ->capture_default_str();
    sal_cmd->callback([&] {
        RunConfig cfg = load_config(sal_cmd, sal_common);
        Rng rng(cfg.seed);
        ConvDeconvBlock block = ConvDeconvBlock::seeded(1, sal_mid, sal_out_ch, sal_kernel, rng);
        std::vector<Tensor3> frames;
        if (!sal_frames.empty()) {
            Matrix m = read_feature_file(sal_frames);
            if (sal_height == 0 || m.cols % sal_height != 0)
                throw validation_error("feature width " + std::to_string(m.cols) +
                                       " is not divisible by height " +
                                       std::to_string(sal_height));
            size_t width = m.cols / sal_height;
            for (size_t r = 0; r < m.rows; ++r) {
                Tensor3 f(1, sal_height, width);
                std::copy(m.row_ptr(r), m.row_ptr(r) + m.cols, f.data.begin());
                frames.push_back(std::move(f));
            }
        } else {
            for (size_t i = 0; i < sal_count; ++i) {
                Tensor3 f(1, sal_height, sal_width);
                for (double& x : f.data) x = rng.normal(0.0, 1.0);
                frames.push_back(std::move(f));
            }
        }
        if (frames.empty()) throw validation_error("no frames to differentiate");
        for (size_t t = 0; t < frames.size(); ++t) {
            SaliencyMap map = saliency(block, frames[t], sal_channel, t);
            char name[32];
            std::snprintf(name, sizeof(name), "saliency_%03zu.csv", t);
            export_saliency_csv(map, under(sal_common.out, name));
        }
        std::cout << "wrote " << frames.size() << " saliency maps under " << sal_common.out
                  << "\n";
    });

    // bo-trace
    auto* bo_cmd = app.add_subcommand("bo-trace",
                                      "run the temperature search on a reference objective");
    CommonOpts bo_common;
    std::string bo_objective = "w";
    add_common(bo_cmd, bo_common);
    bo_cmd->add_option("--objective", bo_objective, "reference loss surface")
        ->check(CLI::IsMember({"quadratic", "w"}))
        ->capture_default_str();
    bo_cmd->callback([&] {
        RunConfig cfg = load_config(bo_cmd, bo_common);
        // Both surfaces bottom out at t = 2.5; the w shape adds a shallower
        // local minimum at t = 1.2.
        auto quadratic = [](double t) { return 0.5 * (t - 2.5) * (t - 2.5) + 0.2; };
        auto w_shape = [](double t) {
            double local = 1.5 * (t - 1.2) * (t - 1.2) + 0.35;
            double global = (t - 2.5) * (t - 2.5) + 0.05;
            return std::min(local, global);
        };
        BoResult r = bo_objective == "quadratic"
                         ? optimize_temperature(quadratic, cfg.bo)
                         : optimize_temperature(w_shape, cfg.bo);
        std::string trace_path = under(bo_common.out, "bo_trace.csv");
        write_bo_trace_csv(trace_path, r.trace);
        std::cout << "t_opt " << r.t_opt << " after " << r.trace.size() << " evaluations\n"
                  << "wrote " << trace_path << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
