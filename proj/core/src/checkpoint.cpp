#include "paradiff/checkpoint.hpp"

#include "paradiff/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace paradiff {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'D', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint: " + path.string());
    return v;
}

}  // namespace

const Matrix& Archive::tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors) {
        if (n == name) return m;
    }
    throw ContractError("checkpoint has no tensor '" + name + "'");
}

bool Archive::has_tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors) {
        if (n == name) return true;
    }
    return false;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kArchiveVersion);
    const std::string meta = archive.meta.dump();
    put<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.tensors.size()));
    for (const auto& [name, m] : archive.tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("not a checkpoint file: " + path.string());
    }
    const auto version = get<std::uint32_t>(in, path);
    if (version != kArchiveVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
    }
    Archive archive;
    const auto meta_len = get<std::uint64_t>(in, path);
    std::string meta(meta_len, '\0');
    if (!in.read(meta.data(), static_cast<std::streamsize>(meta_len))) throw IoError("truncated checkpoint: " + path.string());
    archive.meta = nlohmann::json::parse(meta);
    const auto count = get<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = get<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw IoError("truncated checkpoint: " + path.string());
        const auto rows = get<std::uint64_t>(in, path);
        const auto cols = get<std::uint64_t>(in, path);
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>(in, path);
        }
        archive.tensors.emplace_back(std::move(name), std::move(m));
    }
    return archive;
}

void store_params(Archive& archive, const ParamSet& params, const std::string& prefix) {
    for (std::size_t i = 0; i < params.size(); ++i) archive.tensors.emplace_back(prefix + params.name(i), params.at(i));
}

void restore_params(const Archive& archive, ParamSet& params, const std::string& prefix) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& m = archive.tensor(prefix + params.name(i));
        if (m.rows() != params.at(i).rows() || m.cols() != params.at(i).cols()) {
            throw ContractError("checkpoint tensor '" + prefix + params.name(i) + "' has the wrong shape");
        }
        params.at(i) = m;
    }
}

}  // namespace paradiff
