#include "asuka/sched/latent_aug.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "asuka/core/checkpoint.hpp"

namespace asuka::sched {

namespace fs = std::filesystem;
using core::Image;
using core::Tensor;
using nlohmann::json;

void AugmentManifest::save(const fs::path& p) const {
    json j;
    j["apply_prob"] = apply_prob;
    j["family"] = family;
    j["T"] = T;
    j["seed"] = seed;
    j["records"] = json::array();
    for (const auto& r : records) {
        json e;
        e["source_path"] = r.source_path;
        e["output_path"] = r.output_path;
        e["applied"] = r.applied;
        if (r.applied) e["t"] = r.t;
        else e["t"] = nullptr;
        e["seed"] = r.seed;
        j["records"].push_back(e);
    }
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write augment manifest: " + p.string());
    out << j.dump(2) << "\n";
}

AugmentManifest AugmentManifest::load(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read augment manifest: " + p.string());
    json j;
    in >> j;
    AugmentManifest m;
    m.apply_prob = j.at("apply_prob").get<double>();
    m.family = j.at("family").get<std::string>();
    m.T = j.at("T").get<std::int64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("records")) {
        AugmentRecord r;
        r.source_path = e.at("source_path").get<std::string>();
        r.output_path = e.at("output_path").get<std::string>();
        r.applied = e.at("applied").get<bool>();
        r.t = e.at("t").is_null() ? -1 : e.at("t").get<std::int64_t>();
        r.seed = e.at("seed").get<std::uint64_t>();
        m.records.push_back(std::move(r));
    }
    return m;
}

Image load_image_any(const fs::path& p) {
    if (p.extension() == ".at") {
        const Tensor t = core::load_tensor(p);
        if (t.rank() != 3 || t.dim(2) != 3)
            throw std::runtime_error("image tensor must be [H,W,3]: " + p.string());
        Image img(t.dim(0), t.dim(1));
        img.data = t.data;
        return img;
    }
    return core::read_png_rgb(p);
}

void save_image_tensor(const fs::path& p, const Image& img) {
    Tensor t({img.height, img.width, 3});
    t.data = img.data;
    core::save_tensor(p, t);
}

namespace {
const char* family_name(ScheduleFamily f) {
    return f == ScheduleFamily::diffusion ? "diffusion" : "rectified_flow";
}

bool manifest_compatible(const AugmentManifest& m, const std::vector<fs::path>& images,
                         const NoiseSchedule& schedule, double apply_prob, std::uint64_t seed) {
    if (m.apply_prob != apply_prob || m.family != family_name(schedule.family) ||
        m.T != schedule.T || m.seed != seed || m.records.size() != images.size())
        return false;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (m.records[i].source_path != images[i].string()) return false;
        if (!fs::exists(m.records[i].output_path)) return false;
    }
    return true;
}
}  // namespace

AugmentManifest latent_augment_corpus(const std::vector<fs::path>& images, const LatentCodec& vae,
                                      const DenoiserFn& denoiser, PredictionTarget target,
                                      const NoiseSchedule& schedule, core::RngStream& rng,
                                      double apply_prob, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const fs::path manifest_path = out_dir / "augment_manifest.json";
    if (fs::exists(manifest_path)) {
        const AugmentManifest existing = AugmentManifest::load(manifest_path);
        if (manifest_compatible(existing, images, schedule, apply_prob, rng.seed()))
            return existing;  // cache hit, no recomputation
    }

    AugmentManifest manifest;
    manifest.apply_prob = apply_prob;
    manifest.family = family_name(schedule.family);
    manifest.T = schedule.T;
    manifest.seed = rng.seed();

    for (std::size_t i = 0; i < images.size(); ++i) {
        // independent per-item stream so items can be processed in any order
        core::RngStream item_rng = rng.split(i);
        AugmentRecord rec;
        rec.source_path = images[i].string();
        rec.seed = item_rng.seed();
        if (item_rng.bernoulli(apply_prob)) {
            const Image src = load_image_any(images[i]);
            Tensor z0 = vae.encode(src);
            // large-step regime: t in [T/2, T), scaled from the T=1000 design
            const std::int64_t t = item_rng.uniform_int(schedule.T / 2, schedule.T - 1);
            const LatentState st = make_latent_state(schedule, std::move(z0), t, item_rng);
            const Tensor z0_hat = one_step_estimate(st.z_t, t, denoiser, target, st.z0, schedule);
            const Image out = vae.decode(z0_hat);
            const fs::path out_path = out_dir / ("aug_" + std::to_string(i) + ".at");
            save_image_tensor(out_path, out);
            rec.output_path = out_path.string();
            rec.applied = true;
            rec.t = t;
        } else {
            rec.output_path = images[i].string();
            rec.applied = false;
        }
        manifest.records.push_back(std::move(rec));
    }
    manifest.save(manifest_path);
    return manifest;
}

}  // namespace asuka::sched
