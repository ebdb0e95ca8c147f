#include "tcvads/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tcvads/errors.hpp"
#include "tcvads/feature_io.hpp"
#include "tcvads/matrix.hpp"
#include "tcvads/rng.hpp"

namespace tcvads {

namespace {

namespace fs = std::filesystem;

std::string slug(const std::string& label) {
    std::string s = label;
    for (char& c : s)
        if (c == ' ') c = '-';
    return s;
}

std::string zero_pad(size_t v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

std::vector<double> unit_direction(Rng& rng, size_t dim) {
    std::vector<double> v(dim);
    double norm2 = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm2 += x * x;
    }
    double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

}  // namespace

SyntheticDataset gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
    spec.classes.validate();
    if (spec.frames == 0 || spec.dim == 0)
        throw validation_error("gen_synthetic: frames and dim must be > 0");
    if (spec.burst_len == 0 || spec.burst_len > spec.frames)
        throw validation_error("gen_synthetic: burst_len must be in [1, frames]");
    if (!(spec.noise >= 0.0) || !(spec.separation >= 0.0))
        throw validation_error("gen_synthetic: noise and separation must be >= 0");

    fs::create_directories(fs::path(out_dir) / "features");

    // Shared geometry drawn from the dataset seed: a base signature and one
    // unit direction per class.
    Rng geo_rng(splitmix64(spec.seed ^ 0xa5a5a5a5a5a5a5a5ULL));
    std::vector<double> base(spec.dim);
    for (double& x : base) x = geo_rng.normal();
    std::vector<std::vector<double>> directions;
    directions.reserve(spec.classes.size());
    for (size_t c = 0; c < spec.classes.size(); ++c)
        directions.push_back(unit_direction(geo_rng, spec.dim));

    SyntheticDataset ds;
    for (int split = 0; split < 2; ++split) {
        bool is_train = split == 0;
        size_t per_class = is_train ? spec.train_per_class : spec.test_per_class;
        auto& entries = is_train ? ds.train : ds.test;
        for (size_t c = 0; c < spec.classes.size(); ++c) {
            const std::string& label = spec.classes.labels[c];
            bool is_normal = c == spec.classes.normal_index;
            for (size_t v = 0; v < per_class; ++v) {
                // Per-video stream derived from (seed, split, class, index) so
                // generation order cannot change the content.
                uint64_t video_seed = spec.seed;
                video_seed = splitmix64(video_seed ^ (is_train ? 0x11ULL : 0x22ULL));
                video_seed = splitmix64(video_seed ^ (0x1000ULL + c));
                video_seed = splitmix64(video_seed ^ (0x2000000ULL + v));
                Rng rng(video_seed);

                Matrix feat(spec.frames, spec.dim);
                for (size_t t = 0; t < spec.frames; ++t)
                    for (size_t j = 0; j < spec.dim; ++j)
                        feat.at(t, j) = base[j] + spec.noise * rng.normal();

                ManifestEntry e;
                e.id = std::string(is_train ? "train" : "test") + "_" + slug(label) + "_" +
                       zero_pad(v, 3);
                e.class_label = label;
                e.video_label = is_normal ? 0 : 1;
                std::vector<int> frame_labels(spec.frames, 0);
                std::vector<FrameClassSpan> spans;
                if (!is_normal) {
                    size_t max_start = spec.frames - spec.burst_len;
                    size_t start = max_start == 0 ? 0 : rng.index(max_start + 1);
                    for (size_t t = start; t < start + spec.burst_len; ++t) {
                        frame_labels[t] = 1;
                        for (size_t j = 0; j < spec.dim; ++j)
                            feat.at(t, j) += spec.separation * directions[c][j];
                    }
                    spans.push_back({start, start + spec.burst_len, label});
                }
                e.frame_labels = frame_labels;
                e.frame_class_spans = spans;

                fs::path fpath = fs::path(out_dir) / "features" / (e.id + ".vfea");
                write_feature_file(fpath.string(), feat);
                e.feature_path = fpath.string();
                entries.push_back(e);
            }
        }
    }

    ds.train_manifest_path = (fs::path(out_dir) / "train.jsonl").string();
    ds.test_manifest_path = (fs::path(out_dir) / "test.jsonl").string();
    ds.classes_path = (fs::path(out_dir) / "classes.json").string();
    write_manifest(ds.train_manifest_path, ds.train);
    write_manifest(ds.test_manifest_path, ds.test);
    std::ofstream cls(ds.classes_path, std::ios::trunc);
    if (!cls) throw validation_error("cannot write " + ds.classes_path);
    cls << spec.classes.to_json_text() << "\n";
    return ds;
}

}  // namespace tcvads
