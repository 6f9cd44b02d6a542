#include "asuka/sched/noise_schedule.hpp"

#include <cmath>

namespace asuka::sched {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kCosineOffset = 0.008;

double alpha_bar(double frac) {
    const double f = std::cos((frac + kCosineOffset) / (1.0 + kCosineOffset) * kPi / 2.0);
    const double f0 = std::cos(kCosineOffset / (1.0 + kCosineOffset) * kPi / 2.0);
    return (f * f) / (f0 * f0);
}
}  // namespace

double NoiseSchedule::a(std::int64_t t) const {
    check_t(t);
    if (family == ScheduleFamily::rectified_flow) return 1.0 - double(t) / double(T);
    if (t == 0) return 1.0;
    return std::sqrt(alpha_bar(double(t) / double(T)));
}

double NoiseSchedule::b(std::int64_t t) const {
    check_t(t);
    if (family == ScheduleFamily::rectified_flow) return double(t) / double(T);
    const double at = a(t);
    return std::sqrt(std::max(0.0, 1.0 - at * at));
}

AbCoeffs ab_coeffs(const NoiseSchedule& schedule, std::int64_t t) {
    return AbCoeffs{schedule.a(t), schedule.b(t)};
}

LatentState make_latent_state(const NoiseSchedule& schedule, core::Tensor z0, std::int64_t t,
                              core::RngStream& rng) {
    const auto [a, b] = ab_coeffs(schedule, t);
    LatentState st;
    st.t = t;
    st.eps = core::Tensor(z0.shape);
    for (auto& x : st.eps.data) x = rng.normal();
    st.z_t = core::Tensor(z0.shape);
    for (std::size_t i = 0; i < z0.data.size(); ++i)
        st.z_t.data[i] = a * z0.data[i] + b * st.eps.data[i];
    st.z0 = std::move(z0);
    return st;
}

core::Tensor one_step_estimate(const core::Tensor& z_t, std::int64_t t,
                               const DenoiserFn& denoiser, PredictionTarget target,
                               const core::Tensor& z0_cond, const NoiseSchedule& schedule) {
    const auto [a, b] = ab_coeffs(schedule, t);
    if (a < 1e-6) throw std::runtime_error("one_step_estimate: singular coefficient a(t) < 1e-6");
    core::Tensor pred = denoiser(z_t, z0_cond, t);
    if (!pred.same_shape(z_t)) throw std::invalid_argument("one_step_estimate: denoiser shape mismatch");
    core::Tensor eps_hat = std::move(pred);
    if (target == PredictionTarget::velocity) {
        // v = eps - z0 together with a + b = 1 gives eps_equiv = z_t + a * v
        for (std::size_t i = 0; i < eps_hat.data.size(); ++i)
            eps_hat.data[i] = z_t.data[i] + a * eps_hat.data[i];
    }
    core::Tensor z0_hat = z_t;
    for (std::size_t i = 0; i < z0_hat.data.size(); ++i)
        z0_hat.data[i] = (z_t.data[i] - b * eps_hat.data[i]) / a;
    return z0_hat;
}

}  // namespace asuka::sched
