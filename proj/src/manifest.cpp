#include "tcvads/manifest.hpp"

#include <fstream>
#include <json.hpp>
#include <set>

#include "tcvads/errors.hpp"

namespace tcvads {

namespace {

using nlohmann::json;

json entry_to_json(const ManifestEntry& e) {
    json j;
    j["id"] = e.id;
    j["feature_path"] = e.feature_path;
    j["video_label"] = e.video_label;
    j["class"] = e.class_label;
    if (e.frame_labels) j["frame_labels"] = *e.frame_labels;
    if (e.frame_class_spans) {
        json spans = json::array();
        for (const auto& s : *e.frame_class_spans)
            spans.push_back({{"start", s.start}, {"end", s.end}, {"class", s.class_label}});
        j["frame_class_spans"] = spans;
    }
    if (e.text_embedding_path) j["text_embedding_path"] = *e.text_embedding_path;
    if (e.fine_feature_path) j["fine_feature_path"] = *e.fine_feature_path;
    return j;
}

ManifestEntry entry_from_json(const json& j, const std::string& where) {
    try {
        ManifestEntry e;
        e.id = j.at("id").get<std::string>();
        e.feature_path = j.at("feature_path").get<std::string>();
        e.video_label = j.at("video_label").get<int>();
        e.class_label = j.at("class").get<std::string>();
        if (j.contains("frame_labels"))
            e.frame_labels = j.at("frame_labels").get<std::vector<int>>();
        if (j.contains("frame_class_spans")) {
            std::vector<FrameClassSpan> spans;
            for (const auto& s : j.at("frame_class_spans")) {
                FrameClassSpan span;
                span.start = s.at("start").get<size_t>();
                span.end = s.at("end").get<size_t>();
                span.class_label = s.at("class").get<std::string>();
                spans.push_back(span);
            }
            e.frame_class_spans = spans;
        }
        if (j.contains("text_embedding_path"))
            e.text_embedding_path = j.at("text_embedding_path").get<std::string>();
        if (j.contains("fine_feature_path"))
            e.fine_feature_path = j.at("fine_feature_path").get<std::string>();
        return e;
    } catch (const json::exception& ex) {
        throw validation_error(where + ": malformed manifest entry: " + ex.what());
    }
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open manifest: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            throw validation_error(path + ":" + std::to_string(lineno) + ": invalid JSON: " +
                                   ex.what());
        }
        entries.push_back(entry_from_json(j, path + ":" + std::to_string(lineno)));
    }
    return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw validation_error("cannot open manifest for writing: " + path);
    for (const auto& e : entries) out << entry_to_json(e).dump() << "\n";
    if (!out) throw validation_error("write failed: " + path);
}

void validate_entry(const ManifestEntry& entry, const ClassSet& classes) {
    auto fail = [&](const std::string& why) {
        throw validation_error("manifest entry \"" + entry.id + "\": " + why);
    };
    if (entry.id.empty()) throw validation_error("manifest entry with empty id");
    if (entry.feature_path.empty()) fail("empty feature_path");
    if (entry.video_label != 0 && entry.video_label != 1)
        fail("video_label must be 0 or 1, got " + std::to_string(entry.video_label));
    if (!classes.contains(entry.class_label))
        fail("unknown class \"" + entry.class_label + "\"");
    bool is_normal = classes.is_normal(entry.class_label);
    if (is_normal != (entry.video_label == 0))
        fail("class \"" + entry.class_label + "\" inconsistent with video_label " +
             std::to_string(entry.video_label));
    if (entry.frame_labels) {
        for (int v : *entry.frame_labels) {
            if (v != 0 && v != 1) fail("frame_labels must be 0/1");
            if (is_normal && v != 0) fail("normal video with anomalous frame label");
        }
        if (entry.video_label == 1) {
            bool any = false;
            for (int v : *entry.frame_labels) any = any || v == 1;
            if (!any) fail("anomalous video with no anomalous frames");
        }
    }
    if (entry.frame_class_spans) {
        for (const auto& s : *entry.frame_class_spans) {
            if (s.start >= s.end) fail("empty frame_class_span");
            if (!classes.contains(s.class_label))
                fail("span with unknown class \"" + s.class_label + "\"");
            if (classes.is_normal(s.class_label)) fail("span with normal class");
        }
        if (is_normal && !entry.frame_class_spans->empty())
            fail("normal video with frame_class_spans");
    }
}

void validate_manifest(const std::vector<ManifestEntry>& entries, const ClassSet& classes) {
    classes.validate();
    std::set<std::string> ids;
    for (const auto& e : entries) {
        validate_entry(e, classes);
        if (!ids.insert(e.id).second)
            throw validation_error("manifest: duplicate entry id \"" + e.id + "\"");
    }
}

void check_frame_count(const ManifestEntry& entry, size_t n_frames) {
    if (entry.frame_labels && entry.frame_labels->size() != n_frames)
        throw validation_error("manifest entry \"" + entry.id + "\": frame_labels length " +
                               std::to_string(entry.frame_labels->size()) +
                               " does not match feature rows " + std::to_string(n_frames));
    if (entry.frame_class_spans)
        for (const auto& s : *entry.frame_class_spans)
            if (s.end > n_frames)
                throw validation_error("manifest entry \"" + entry.id +
                                       "\": frame_class_span end " + std::to_string(s.end) +
                                       " exceeds feature rows " + std::to_string(n_frames));
}

}  // namespace tcvads
