#include "asuka/core/checkpoint.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace asuka::core {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + p.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + p.string());
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for read: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
}  // namespace

void save_checkpoint(const fs::path& dir,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& config_hash) {
    fs::create_directories(dir);
    json header;
    header["format"] = "asuka-ckpt-v1";
    header["config_hash"] = config_hash;
    header["tensors"] = json::array();
    std::string payload;
    for (const auto& [name, t] : tensors) {
        json entry;
        entry["name"] = name;
        entry["shape"] = t.shape;
        entry["dtype"] = "f64";
        entry["offset"] = payload.size();
        entry["bytes"] = t.data.size() * sizeof(double);
        header["tensors"].push_back(entry);
        const std::size_t off = payload.size();
        payload.resize(off + t.data.size() * sizeof(double));
        std::memcpy(payload.data() + off, t.data.data(), t.data.size() * sizeof(double));
    }
    write_file(dir / "header.json", header.dump(2) + "\n");
    write_file(dir / "tensors.bin", payload);
}

std::map<std::string, Tensor> load_checkpoint(const fs::path& dir, std::string* config_hash_out) {
    const json header = json::parse(read_file(dir / "header.json"));
    if (header.at("format").get<std::string>() != "asuka-ckpt-v1")
        throw std::runtime_error("unknown checkpoint format in " + dir.string());
    if (config_hash_out) *config_hash_out = header.at("config_hash").get<std::string>();
    const std::string payload = read_file(dir / "tensors.bin");
    std::map<std::string, Tensor> out;
    for (const auto& entry : header.at("tensors")) {
        Tensor t(entry.at("shape").get<std::vector<std::int64_t>>());
        const std::size_t off = entry.at("offset").get<std::size_t>();
        const std::size_t bytes = entry.at("bytes").get<std::size_t>();
        if (bytes != t.data.size() * sizeof(double) || off + bytes > payload.size())
            throw std::runtime_error("corrupt checkpoint payload in " + dir.string());
        std::memcpy(t.data.data(), payload.data() + off, bytes);
        out.emplace(entry.at("name").get<std::string>(), std::move(t));
    }
    return out;
}

void save_params(const fs::path& dir, const ParamStore& params, const std::string& config_hash) {
    std::vector<std::pair<std::string, Tensor>> tensors;
    tensors.reserve(params.items().size());
    for (const auto& [name, v] : params.items()) tensors.emplace_back(name, v->value);
    save_checkpoint(dir, tensors, config_hash);
}

void load_params(const fs::path& dir, ParamStore& params) {
    auto loaded = load_checkpoint(dir);
    for (auto& [name, v] : params.items()) {
        auto it = loaded.find(name);
        if (it == loaded.end()) throw std::runtime_error("checkpoint missing tensor: " + name);
        if (it->second.shape != v->value.shape)
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        v->value = std::move(it->second);
    }
}

std::string sha256_hex(const void* data, std::size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
    if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data, len) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &digest_len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256 failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(digest_len * 2);
    for (unsigned int i = 0; i < digest_len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

std::string sha256_file(const fs::path& p) {
    const std::string bytes = read_file(p);
    return sha256_hex(bytes);
}

std::string checkpoint_hash(const fs::path& dir) {
    const std::string combined = read_file(dir / "header.json") + read_file(dir / "tensors.bin");
    return sha256_hex(combined);
}

void save_tensor(const fs::path& file, const Tensor& t) {
    std::string bytes;
    const std::uint64_t magic = 0x41534B5454454E53ULL;  // "ASKTTENS"
    const std::uint64_t rank = t.shape.size();
    bytes.append(reinterpret_cast<const char*>(&magic), 8);
    bytes.append(reinterpret_cast<const char*>(&rank), 8);
    for (auto d : t.shape) {
        const std::int64_t v = d;
        bytes.append(reinterpret_cast<const char*>(&v), 8);
    }
    bytes.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
    write_file(file, bytes);
}

Tensor load_tensor(const fs::path& file) {
    const std::string bytes = read_file(file);
    if (bytes.size() < 16) throw std::runtime_error("truncated tensor file: " + file.string());
    std::uint64_t magic = 0, rank = 0;
    std::memcpy(&magic, bytes.data(), 8);
    std::memcpy(&rank, bytes.data() + 8, 8);
    if (magic != 0x41534B5454454E53ULL) throw std::runtime_error("bad tensor magic: " + file.string());
    std::vector<std::int64_t> shape(rank);
    std::memcpy(shape.data(), bytes.data() + 16, rank * 8);
    Tensor t(shape);
    const std::size_t header = 16 + rank * 8;
    if (bytes.size() != header + t.data.size() * sizeof(double))
        throw std::runtime_error("tensor payload size mismatch: " + file.string());
    std::memcpy(t.data.data(), bytes.data() + header, t.data.size() * sizeof(double));
    return t;
}

}  // namespace asuka::core
