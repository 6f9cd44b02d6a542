#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "asuka/core/image.hpp"
#include "asuka/core/rng.hpp"

namespace asuka::data {

// Procedural training images: smooth color gradients plus a few soft shapes.
// Deterministic in (seed, index), so corpora never ship with the repo.
core::Image toy_image(std::uint64_t seed, std::int64_t index, std::int64_t size);

std::vector<core::Image> toy_corpus(std::uint64_t seed, std::int64_t count, std::int64_t size);

// Materialize a corpus as lossless .at files; returns the file list.
std::vector<std::filesystem::path> write_toy_corpus(const std::filesystem::path& dir,
                                                    std::uint64_t seed, std::int64_t count,
                                                    std::int64_t size);

}  // namespace asuka::data
