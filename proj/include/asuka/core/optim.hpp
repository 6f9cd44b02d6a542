#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "asuka/core/autodiff.hpp"

namespace asuka::core {

// Decoupled weight decay variant of Adam.
class AdamW {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamW(ParamStore& params, Options opts) : params_(&params), opts_(opts) {
        for (const auto& [name, v] : params.items()) {
            m_.emplace_back(v->value.shape);
            v_.emplace_back(v->value.shape);
        }
    }

    void set_lr(double lr) { opts_.lr = lr; }
    double lr() const { return opts_.lr; }
    std::int64_t step_count() const { return t_; }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(opts_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(opts_.beta2, double(t_));
        const auto& items = params_->items();
        for (std::size_t k = 0; k < items.size(); ++k) {
            auto& p = items[k].second;
            if (!p->requires_grad || p->grad.data.empty()) continue;
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < p->value.data.size(); ++i) {
                const double g = p->grad.data[i];
                m.data[i] = opts_.beta1 * m.data[i] + (1.0 - opts_.beta1) * g;
                v.data[i] = opts_.beta2 * v.data[i] + (1.0 - opts_.beta2) * g * g;
                const double mhat = m.data[i] / bc1;
                const double vhat = v.data[i] / bc2;
                p->value.data[i] -= opts_.lr * (mhat / (std::sqrt(vhat) + opts_.eps) +
                                                opts_.weight_decay * p->value.data[i]);
            }
        }
    }

    // Moments exposed for checkpoint resume.
    std::vector<Tensor>& moments_m() { return m_; }
    std::vector<Tensor>& moments_v() { return v_; }
    void set_step_count(std::int64_t t) { t_ = t; }

private:
    ParamStore* params_;
    Options opts_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace asuka::core
