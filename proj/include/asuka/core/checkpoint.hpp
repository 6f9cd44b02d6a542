#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "asuka/core/autodiff.hpp"
#include "asuka/core/tensor.hpp"

namespace asuka::core {

// Checkpoint layout: a directory holding
//   header.json  — {"format","config_hash","tensors":[{"name","shape","dtype","offset","bytes"}]}
//   tensors.bin  — little-endian f64 payload, concatenated in header order
// Reload is bit-exact; the directory hash is the SHA-256 over both files.

void save_checkpoint(const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& config_hash);

std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& dir,
                                              std::string* config_hash_out = nullptr);

void save_params(const std::filesystem::path& dir, const ParamStore& params,
                 const std::string& config_hash);
void load_params(const std::filesystem::path& dir, ParamStore& params);

// SHA-256 hex digest helpers (OpenSSL-backed).
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file(const std::filesystem::path& p);
std::string checkpoint_hash(const std::filesystem::path& dir);

// Single-tensor binary files, used for lossless latent/augmentation caches.
void save_tensor(const std::filesystem::path& file, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& file);

}  // namespace asuka::core
