#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "asuka/core/image.hpp"
#include "asuka/core/rng.hpp"
#include "asuka/sched/noise_schedule.hpp"

namespace asuka::sched {

// Minimal encode/decode pair for the offline augmentation pipeline.
struct LatentCodec {
    std::function<core::Tensor(const core::Image&)> encode;
    std::function<core::Image(const core::Tensor&)> decode;
};

struct AugmentRecord {
    std::string source_path;
    std::string output_path;
    bool applied = false;
    std::int64_t t = -1;  // -1 serialized as null
    std::uint64_t seed = 0;
};

struct AugmentManifest {
    double apply_prob = 0.5;
    std::string family;
    std::int64_t T = 0;
    std::uint64_t seed = 0;
    std::vector<AugmentRecord> records;

    void save(const std::filesystem::path& p) const;
    static AugmentManifest load(const std::filesystem::path& p);
};

// Offline latent augmentation over a corpus of image files (.png or .at
// tensors). Selected images are encoded, noised at t in [T/2, T), inverted
// with the one-step estimate and decoded; results are cached losslessly under
// out_dir with one manifest. Re-running against an existing compatible
// manifest performs no recomputation.
AugmentManifest latent_augment_corpus(const std::vector<std::filesystem::path>& images,
                                      const LatentCodec& vae, const DenoiserFn& denoiser,
                                      PredictionTarget target, const NoiseSchedule& schedule,
                                      core::RngStream& rng, double apply_prob,
                                      const std::filesystem::path& out_dir);

// Image file helpers shared by the augmentation cache and pair building.
core::Image load_image_any(const std::filesystem::path& p);
void save_image_tensor(const std::filesystem::path& p, const core::Image& img);

}  // namespace asuka::sched
