#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "asuka/core/image.hpp"
#include "asuka/masks/mask.hpp"

namespace asuka::metrics {

struct EvalRecord {
    core::Image pred;
    core::Image gt;
    masks::Mask mask;
};

struct ScoreValue {
    bool available = false;
    double value = 0.0;
};

using ScoreMap = std::map<std::string, ScoreValue>;

struct PluginError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Third-party perceptual scorers plug in by name; G@e is always computed
// in-process. Known external metrics without a registered provider are
// reported as unavailable, never as zero.
class ScorerRegistry {
public:
    using ScorerFn = std::function<std::map<std::string, double>(const std::vector<EvalRecord>&)>;

    void register_scorer(const std::string& name, ScorerFn fn);
    bool has(const std::string& name) const;
    std::vector<std::string> names() const;

    ScoreMap score_with_plugins(const std::vector<EvalRecord>& records,
                                int gae_band_width_px = 2) const;

    static const std::vector<std::string>& known_external_metrics();  // lpips, fid, u_ids, p_ids

private:
    std::map<std::string, ScorerFn> scorers_;
};

}  // namespace asuka::metrics
