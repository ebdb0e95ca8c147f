#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcvads/class_set.hpp"
#include "tcvads/manifest.hpp"

namespace tcvads {

// Controls for the synthetic benchmark generator. Normal videos are noise
// around a shared base signature; anomalous videos add a class-specific
// direction over one contiguous burst of frames, and the burst frames carry
// the anomalous frame labels.
struct SyntheticSpec {
    ClassSet classes = ClassSet::default_seven();
    size_t train_per_class = 10;
    size_t test_per_class = 4;
    size_t frames = 64;
    size_t dim = 32;
    size_t burst_len = 16;
    double separation = 2.0;
    double noise = 0.5;
    uint64_t seed = 7;
};

struct SyntheticDataset {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> test;
    std::string train_manifest_path;
    std::string test_manifest_path;
    std::string classes_path;
};

// Writes feature files plus train.jsonl / test.jsonl / classes.json under
// out_dir. Byte-identical for identical spec (seed included).
SyntheticDataset gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

}  // namespace tcvads
