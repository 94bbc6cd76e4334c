#pragma once

#include "paradiff/errors.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace paradiff {

using Json = nlohmann::json;

// Reads optional keys from a JSON object and rejects any key it was not
// asked about when finish() is called.
class StrictReader {
public:
    StrictReader(const Json& object, std::string context);

    template <typename T>
    StrictReader& get(const std::string& key, T& out) {
        seen_.insert(key);
        if (auto it = object_.find(key); it != object_.end()) {
            try {
                it->get_to(out);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("invalid value for '" + path(key) + "': " + e.what());
            }
        }
        return *this;
    }

    const Json* child(const std::string& key);
    std::string path(const std::string& key) const { return context_.empty() ? key : context_ + "." + key; }
    void finish() const;

private:
    const Json& object_;
    std::string context_;
    std::set<std::string> seen_;
};

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);
std::vector<Json> read_jsonl(const std::filesystem::path& path);

}  // namespace paradiff
