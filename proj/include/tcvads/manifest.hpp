#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tcvads/class_set.hpp"

namespace tcvads {

struct FrameClassSpan {
    size_t start = 0;  // inclusive
    size_t end = 0;    // exclusive
    std::string class_label;
};

// One video in a JSON-lines manifest. Optional fields may be absent per line.
struct ManifestEntry {
    std::string id;
    std::string feature_path;
    int video_label = 0;  // 1 anomalous, 0 normal
    std::string class_label;
    std::optional<std::vector<int>> frame_labels;
    std::optional<std::vector<FrameClassSpan>> frame_class_spans;
    std::optional<std::string> text_embedding_path;
    // Features for the fine stage; the coarse-stage path is reused when unset.
    std::optional<std::string> fine_feature_path;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// Structural checks that do not need the feature files: known class, label
// consistent with the class, frame labels in {0,1} and all zero for normal
// entries, well-formed spans. Error messages name the entry id.
void validate_entry(const ManifestEntry& entry, const ClassSet& classes);
void validate_manifest(const std::vector<ManifestEntry>& entries, const ClassSet& classes);

// Frame-count check once the feature row count is known.
void check_frame_count(const ManifestEntry& entry, size_t n_frames);

}  // namespace tcvads
