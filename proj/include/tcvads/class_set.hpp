#pragma once

#include <string>
#include <vector>

namespace tcvads {

// Ordered class labels with exactly one designated normal class.
struct ClassSet {
    std::vector<std::string> labels;
    size_t normal_index = 0;

    const std::string& normal_label() const { return labels[normal_index]; }
    bool contains(const std::string& label) const;
    size_t index_of(const std::string& label) const;  // throws on unknown label
    bool is_normal(const std::string& label) const { return label == normal_label(); }
    size_t size() const { return labels.size(); }

    // Throws unless labels are non-empty, unique, and exactly one is normal.
    void validate() const;

    // Parses a JSON array of strings; the normal class carries a leading '*',
    // e.g. ["fights", "riots", "*normal"].
    static ClassSet from_json_text(const std::string& text);
    std::string to_json_text() const;

    // Six anomaly classes plus normal.
    static ClassSet default_seven();
};

}  // namespace tcvads
