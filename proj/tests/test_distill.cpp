#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tcvads/distill.hpp"
#include "tcvads/errors.hpp"
#include "tcvads/feature_io.hpp"
#include "tcvads/metrics.hpp"
#include "tcvads/synthetic.hpp"

#include "support.hpp"

using namespace tcvads;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("tcvads_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<unsigned char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::vector<double> flatten_student(const QacmStudent& s) {
    std::vector<double> out;
    out.insert(out.end(), s.w1.data.begin(), s.w1.data.end());
    out.insert(out.end(), s.b1.begin(), s.b1.end());
    out.insert(out.end(), s.w2.data.begin(), s.w2.data.end());
    out.insert(out.end(), s.b2.begin(), s.b2.end());
    out.insert(out.end(), s.w3.data.begin(), s.w3.data.end());
    out.insert(out.end(), s.b3.begin(), s.b3.end());
    out.insert(out.end(), s.head_w.begin(), s.head_w.end());
    out.push_back(s.head_b);
    return out;
}

void unflatten_student(QacmStudent& s, const std::vector<double>& v) {
    size_t i = 0;
    for (double& x : s.w1.data) x = v[i++];
    for (double& x : s.b1) x = v[i++];
    for (double& x : s.w2.data) x = v[i++];
    for (double& x : s.b2) x = v[i++];
    for (double& x : s.w3.data) x = v[i++];
    for (double& x : s.b3) x = v[i++];
    for (double& x : s.head_w) x = v[i++];
    s.head_b = v[i];
}

std::vector<double> flatten_grads(const StudentGrads& g) {
    std::vector<double> out;
    out.insert(out.end(), g.d_w1.data.begin(), g.d_w1.data.end());
    out.insert(out.end(), g.d_b1.begin(), g.d_b1.end());
    out.insert(out.end(), g.d_w2.data.begin(), g.d_w2.data.end());
    out.insert(out.end(), g.d_b2.begin(), g.d_b2.end());
    out.insert(out.end(), g.d_w3.data.begin(), g.d_w3.data.end());
    out.insert(out.end(), g.d_b3.begin(), g.d_b3.end());
    out.insert(out.end(), g.d_head_w.begin(), g.d_head_w.end());
    out.push_back(g.d_head_b);
    return out;
}

SyntheticDataset make_separable(const fs::path& dir) {
    SyntheticSpec spec;
    spec.classes = ClassSet{{"fights", "explosions", "normal"}, 2};
    spec.train_per_class = 8;
    spec.test_per_class = 5;
    spec.frames = 32;
    spec.dim = 12;
    spec.burst_len = 8;
    spec.separation = 2.5;
    spec.noise = 0.4;
    spec.seed = 11;
    return gen_synthetic(spec, dir.string());
}

std::vector<LabeledSequence> load_sequences(const std::vector<ManifestEntry>& entries) {
    std::vector<LabeledSequence> out;
    for (const ManifestEntry& e : entries)
        out.push_back({e.id, read_feature_file(e.feature_path), e.video_label});
    return out;
}

}  // namespace

TEST_CASE("student_forward: zero weights, shape, and short-sequence error") {
    QacmStudent s = QacmStudent::make(3, 2);
    s.head_b = 0.7;
    Rng rng(7);
    Matrix feats = testsup::random_gaussian_matrix(rng, 9, 3);
    StudentForward f = student_forward(s, feats);
    CHECK(f.frame_logits.size() == 9);
    for (double z : f.frame_logits) CHECK(z == 0.7);
    CHECK(f.logit == doctest::Approx(0.7).epsilon(1e-15));

    Matrix two = testsup::random_gaussian_matrix(rng, 2, 3);
    CHECK_THROWS_WITH_AS(student_forward(s, two), doctest::Contains("at least 3 frames"),
                         validation_error);
    Matrix wide = testsup::random_gaussian_matrix(rng, 5, 4);
    CHECK_THROWS_AS(student_forward(s, wide), validation_error);
}

TEST_CASE("student_forward: video logit is the mean of frame logits") {
    QacmStudent s = QacmStudent::seeded(4, 3, 42);
    Rng rng(9);
    Matrix feats = testsup::random_gaussian_matrix(rng, 11, 4);
    StudentForward f = student_forward(s, feats);
    double mean = 0.0;
    for (double z : f.frame_logits) mean += z;
    mean /= 11.0;
    CHECK(f.logit == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("student_forward: hand-checked temporal convolution with padding") {
    QacmStudent s = QacmStudent::make(1, 1);
    // Single filter taps (a, b, c) over (previous, current, next) frame.
    s.w1.at(0, 0) = 2.0;
    s.w1.at(0, 1) = 3.0;
    s.w1.at(0, 2) = 5.0;
    s.b1[0] = 0.1;
    Matrix x{{1.0}, {10.0}, {100.0}};
    StudentForward f = student_forward(s, x);
    CHECK(f.pre1.at(0, 0) == doctest::Approx(0.1 + 3.0 * 1 + 5.0 * 10).epsilon(1e-15));
    CHECK(f.pre1.at(1, 0) == doctest::Approx(0.1 + 2.0 * 1 + 3.0 * 10 + 5.0 * 100).epsilon(1e-15));
    CHECK(f.pre1.at(2, 0) == doctest::Approx(0.1 + 2.0 * 10 + 3.0 * 100).epsilon(1e-15));
}

TEST_CASE("student gradient matches finite differences on 20 seeds") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(3000 + seed);
        size_t d = 2 + rng.index(3), h = 2 + rng.index(2), n = 4 + rng.index(4);
        QacmStudent s = QacmStudent::seeded(d, h, 900 + seed);
        // Zero biases leave fully dead conv2 receptive fields sitting exactly
        // on the relu kink, where central differences disagree with the
        // dead-at-zero subgradient. Random biases keep pre-activations off it.
        for (double& b : s.b1) b = rng.normal(0.0, 0.3);
        for (double& b : s.b2) b = rng.normal(0.0, 0.3);
        for (double& b : s.b3) b = rng.normal(0.0, 0.3);
        Matrix feats = testsup::random_gaussian_matrix(rng, n, d);

        StudentForward fwd = student_forward(s, feats);
        StudentGrads grads = StudentGrads::zeros(d, h);
        student_backward(s, feats, fwd, 1.0, grads);

        GradCheckReport report = finite_diff_check(
            [&](const std::vector<double>& v) {
                QacmStudent probe = s;
                unflatten_student(probe, v);
                return student_forward(probe, feats).logit;
            },
            flatten_student(s), flatten_grads(grads));
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("hard and total losses") {
    CHECK(hard_loss({0.5, 0.5}, {1.0, 0.0}) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    double perfect = hard_loss({1.0 - 1e-9, 1e-9}, {1.0, 0.0});
    CHECK(perfect > 0.0);
    CHECK(perfect < 1e-6);

    CHECK(total_distill_loss(1.0, 2.0, 0.5) == 2.0);
    CHECK(total_distill_loss(0.7, 123.0, 0.0) == 0.7);
    CHECK(total_distill_loss(0.0, 3.0, 0.25) == 0.75);
}

TEST_CASE("soft-loss gradient wrt student logits checks out at four temperatures") {
    Rng rng(33);
    for (double temp : {0.5, 1.0, 2.5, 5.0}) {
        Matrix teacher = testsup::random_gaussian_matrix(rng, 3, 2);
        Matrix student = testsup::random_gaussian_matrix(rng, 3, 2);
        Matrix analytic = kl_soft_loss_grad(teacher, student, temp);
        GradCheckReport report = finite_diff_check(
            [&](const std::vector<double>& v) {
                Matrix s = student;
                s.data = v;
                return kl_soft_loss(teacher, s, temp);
            },
            student.data, analytic.data);
        CHECK(report.max_rel_error < 1e-6);
    }
}

TEST_CASE("student stays smaller than the teacher on default widths") {
    QacmStudent s = QacmStudent::make(32, 16);
    CHECK(s.param_count() == 3137);
    CHECK(s.param_count() == flatten_student(s).size());
    EnhancedRwkv teacher = EnhancedRwkv::make(32);
    CHECK(s.param_count() < teacher.param_count());
}

TEST_CASE("student checkpoint: round trip, section tag, forward equality") {
    QacmStudent s = QacmStudent::seeded(5, 4, 123);
    s.head_b = 0.375;
    fs::path dir = temp_dir("student_ckpt");
    fs::path path = dir / "student.tcvt";
    s.save(path.string());

    QacmStudent loaded = QacmStudent::load(path.string());
    CHECK(loaded.dim == 5);
    CHECK(loaded.hidden == 4);
    CHECK(loaded.head_b == 0.375);
    fs::path again = dir / "again.tcvt";
    loaded.save(again.string());
    CHECK(file_bytes(path) == file_bytes(again));

    Rng rng(11);
    Matrix feats = testsup::random_gaussian_matrix(rng, 8, 5);
    CHECK(student_forward(s, feats).frame_logits == student_forward(loaded, feats).frame_logits);

    EnhancedRwkv teacher = EnhancedRwkv::seeded(5, 7);
    fs::path teacher_path = dir / "teacher.tcvt";
    teacher.save(teacher_path.string());
    CHECK_THROWS_AS(QacmStudent::load(teacher_path.string()), validation_error);
    fs::remove_all(dir);
}

TEST_CASE("distill config validation") {
    DistillConfig cfg;
    cfg.lambda = -0.1;
    CHECK_THROWS_AS(cfg.validate(), validation_error);
    cfg = DistillConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), validation_error);
    cfg = DistillConfig{};
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), validation_error);
    cfg = DistillConfig{};
    cfg.probe_epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), validation_error);
}

TEST_CASE("distill: lambda 0 reduces to plain supervised training") {
    fs::path dir = temp_dir("distill_l0");
    SyntheticDataset data = make_separable(dir / "data");
    std::vector<LabeledSequence> train = load_sequences(data.train);
    EnhancedRwkv teacher = EnhancedRwkv::seeded(12, 5);

    DistillConfig cfg;
    cfg.lambda = 0.0;
    cfg.epochs = 6;
    DistillResult kd = distill(teacher, train, cfg, BoConfig{});
    StudentTrainResult plain = train_student_bce(train, cfg);

    CHECK(kd.t_opt == 1.0);
    CHECK(kd.trace.empty());
    CHECK(kd.loss_history == plain.loss_history);

    kd.student.save((dir / "a.tcvt").string());
    plain.student.save((dir / "b.tcvt").string());
    CHECK(file_bytes(dir / "a.tcvt") == file_bytes(dir / "b.tcvt"));
    fs::remove_all(dir);
}

TEST_CASE("distill: deterministic and transfers teacher accuracy") {
    fs::path dir = temp_dir("distill_e2e");
    SyntheticDataset data = make_separable(dir / "data");
    std::vector<LabeledSequence> train = load_sequences(data.train);
    std::vector<LabeledSequence> test = load_sequences(data.test);

    TrainConfig tcfg;
    tcfg.learning_rate = 0.2;
    tcfg.epochs = 30;
    tcfg.batch_size = 8;
    tcfg.seed = 7;
    AfedTrainResult teacher = train_afed(train, tcfg);

    DistillConfig cfg;
    cfg.epochs = 40;
    cfg.probe_epochs = 3;
    BoConfig bo;
    bo.n_iter = 8;
    DistillResult kd = distill(teacher.model, train, cfg, bo);

    CHECK(kd.t_opt >= bo.t_min);
    CHECK(kd.t_opt <= bo.t_max);
    CHECK(kd.trace.size() == bo.n_init + bo.n_iter);
    REQUIRE(kd.loss_history.size() == cfg.epochs);

    std::vector<ScoredItem> teacher_items, student_items;
    for (const LabeledSequence& s : test) {
        teacher_items.push_back({video_score(teacher.model, s.features).video_scr, s.label, {}, {}});
        student_items.push_back(
            {sigmoid(student_forward(kd.student, s.features).logit), s.label, {}, {}});
    }
    double teacher_auc = roc_auc(teacher_items);
    double student_auc = roc_auc(student_items);
    CHECK(std::fabs(teacher_auc - student_auc) <= 0.03);

    DistillResult again = distill(teacher.model, train, cfg, bo);
    CHECK(again.t_opt == kd.t_opt);
    CHECK(again.loss_history == kd.loss_history);
    kd.student.save((dir / "a.tcvt").string());
    again.student.save((dir / "b.tcvt").string());
    CHECK(file_bytes(dir / "a.tcvt") == file_bytes(dir / "b.tcvt"));
    fs::remove_all(dir);
}

TEST_CASE("distill: dataset validation") {
    EnhancedRwkv teacher = EnhancedRwkv::seeded(4, 3);
    DistillConfig cfg;
    CHECK_THROWS_AS(distill(teacher, {}, cfg, BoConfig{}), validation_error);

    Rng rng(5);
    std::vector<LabeledSequence> short_seq{
        {"s", testsup::random_gaussian_matrix(rng, 2, 4), 1}};
    CHECK_THROWS_WITH_AS(distill(teacher, short_seq, cfg, BoConfig{}),
                         doctest::Contains("at least 3 frames"), validation_error);

    std::vector<LabeledSequence> wrong_dim{
        {"w", testsup::random_gaussian_matrix(rng, 8, 5), 1}};
    CHECK_THROWS_AS(distill(teacher, wrong_dim, cfg, BoConfig{}), validation_error);
}
