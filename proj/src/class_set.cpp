#include "tcvads/class_set.hpp"

#include <json.hpp>
#include <set>

#include "tcvads/errors.hpp"

namespace tcvads {

bool ClassSet::contains(const std::string& label) const {
    for (const auto& l : labels)
        if (l == label) return true;
    return false;
}

size_t ClassSet::index_of(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return i;
    throw validation_error("class set: unknown class \"" + label + "\"");
}

void ClassSet::validate() const {
    if (labels.empty()) throw validation_error("class set: empty");
    std::set<std::string> seen(labels.begin(), labels.end());
    if (seen.size() != labels.size()) throw validation_error("class set: duplicate labels");
    if (normal_index >= labels.size())
        throw validation_error("class set: normal index out of range");
    for (const auto& l : labels)
        if (l.empty()) throw validation_error("class set: empty label");
}

ClassSet ClassSet::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("class set: invalid JSON: ") + e.what());
    }
    if (!j.is_array()) throw validation_error("class set: expected a JSON array of strings");
    ClassSet cs;
    size_t normal_count = 0;
    for (const auto& item : j) {
        if (!item.is_string())
            throw validation_error("class set: expected a JSON array of strings");
        std::string s = item.get<std::string>();
        if (!s.empty() && s[0] == '*') {
            cs.normal_index = cs.labels.size();
            cs.labels.push_back(s.substr(1));
            ++normal_count;
        } else {
            cs.labels.push_back(s);
        }
    }
    if (normal_count != 1)
        throw validation_error("class set: exactly one label must be flagged normal with '*'");
    cs.validate();
    return cs;
}

std::string ClassSet::to_json_text() const {
    nlohmann::json j = nlohmann::json::array();
    for (size_t i = 0; i < labels.size(); ++i)
        j.push_back(i == normal_index ? "*" + labels[i] : labels[i]);
    return j.dump();
}

ClassSet ClassSet::default_seven() {
    ClassSet cs;
    cs.labels = {"verbal abuse", "car accidents", "explosions",
                 "fights",       "riots",         "shootings",
                 "normal"};
    cs.normal_index = 6;
    return cs;
}

}  // namespace tcvads
