#pragma once

// Run manifests: resolved configuration, content hashes of inputs and
// outputs, tool version and wall-clock time, written next to each output as
// `<output>.manifest.json`.

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qol/error.hpp"

namespace qol {

inline constexpr std::string_view kToolVersion = "1.0.0";

inline std::string sha1_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1)
        throw Error("SHA-1 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

/// Same digest `git hash-object` prints: SHA-1 of "blob <size>\0" + content.
inline std::string git_blob_hash(std::string_view content) {
    std::string buf = "blob " + std::to_string(content.size());
    buf.push_back('\0');
    buf.append(content);
    return sha1_hex(buf);
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string git_blob_hash_file(const std::string& path) { return git_blob_hash(read_file_bytes(path)); }

/// Writes to a sibling temporary file, then renames over the target.
inline void write_file_atomic(const std::string& path, std::string_view content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed for '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move '" + tmp + "' to '" + path + "'");
    }
}

struct FileRecord {
    std::string path;
    std::string hash;
};

struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;
    std::vector<FileRecord> inputs;
    std::vector<FileRecord> outputs;
    double wall_seconds = 0.0;

    void add_input(const std::string& path) { inputs.push_back({path, git_blob_hash_file(path)}); }
    void add_output(const std::string& path) { outputs.push_back({path, git_blob_hash_file(path)}); }

    /// Hash of command, resolved config and input hashes: two runs with the
    /// same content hash are expected to produce the same outputs.
    std::string content_hash() const {
        nlohmann::json j{{"command", command}, {"config", config}};
        for (const auto& f : inputs) j["inputs"].push_back(f.hash);
        return git_blob_hash(j.dump());
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["tool"] = "qol";
        j["version"] = kToolVersion;
        j["command"] = command;
        j["config"] = config;
        j["inputs"] = nlohmann::json::array();
        for (const auto& f : inputs) j["inputs"].push_back({{"path", f.path}, {"git_blob_sha1", f.hash}});
        j["outputs"] = nlohmann::json::array();
        for (const auto& f : outputs) j["outputs"].push_back({{"path", f.path}, {"git_blob_sha1", f.hash}});
        j["content_hash"] = content_hash();
        j["wall_seconds"] = wall_seconds;
        return j;
    }

    void write(const std::string& path) const { write_file_atomic(path, to_json().dump(2) + "\n"); }
};

inline std::string manifest_path(const std::string& output) { return output + ".manifest.json"; }

}  // namespace qol
