#include "paradiff/json_io.hpp"

#include <fstream>
#include <sstream>

namespace paradiff {

StrictReader::StrictReader(const Json& object, std::string context) : object_(object), context_(std::move(context)) {
    if (!object_.is_object()) throw ConfigError("'" + (context_.empty() ? "<root>" : context_) + "' must be an object");
}

const Json* StrictReader::child(const std::string& key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
}

void StrictReader::finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it) {
        if (!seen_.contains(it.key())) throw ConfigError("unknown config key '" + path(it.key()) + "'");
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records) {
    std::string out;
    for (const auto& r : records) {
        out += r.dump();
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<Json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace paradiff
