#include "asuka/metrics/scorers.hpp"

#include "asuka/metrics/gradient_edge.hpp"

namespace asuka::metrics {

void ScorerRegistry::register_scorer(const std::string& name, ScorerFn fn) {
    if (!fn) throw std::invalid_argument("register_scorer: empty function");
    scorers_[name] = std::move(fn);
}

bool ScorerRegistry::has(const std::string& name) const { return scorers_.count(name) > 0; }

std::vector<std::string> ScorerRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : scorers_) out.push_back(k);
    return out;
}

const std::vector<std::string>& ScorerRegistry::known_external_metrics() {
    static const std::vector<std::string> names = {"lpips", "fid", "u_ids", "p_ids"};
    return names;
}

ScoreMap ScorerRegistry::score_with_plugins(const std::vector<EvalRecord>& records,
                                            int gae_band_width_px) const {
    ScoreMap out;
    // built-in metric, always present
    double gae = 0.0;
    std::int64_t counted = 0;
    for (const auto& rec : records) {
        const double r = rec.mask.ratio();
        if (r == 0.0 || r == 1.0) continue;  // undefined band; skip the item
        gae += gradient_at_edge(rec.pred, rec.gt, rec.mask, gae_band_width_px);
        ++counted;
    }
    if (counted > 0) out["gradient_at_edge"] = ScoreValue{true, gae / double(counted)};
    else out["gradient_at_edge"] = ScoreValue{false, 0.0};

    for (const auto& name : known_external_metrics()) out[name] = ScoreValue{false, 0.0};

    for (const auto& [name, fn] : scorers_) {
        try {
            for (const auto& [metric, value] : fn(records)) out[metric] = ScoreValue{true, value};
        } catch (const std::exception& e) {
            throw PluginError("scorer '" + name + "' failed: " + e.what());
        }
    }
    return out;
}

}  // namespace asuka::metrics
