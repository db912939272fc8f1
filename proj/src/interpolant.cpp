// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/interpolant.hpp"

#include "vaerepa/kernels/kernels.hpp"

namespace vaerepa::interpolant {

ScheduleValues Schedule::eval(double t) const {
    require(t >= 0.0 && t <= 1.0, ErrorKind::Domain, "schedule evaluated at t = {} outside [0, 1]", t);
    switch (kind_) {
        case ScheduleKind::Linear: return {1.0 - t, t, -1.0, 1.0};
    }
    fail(ErrorKind::Domain, "unknown schedule kind");
}

template <typename T>
void corrupt_into(std::span<const T> z, std::span<const T> eps, double t, const Schedule& s, std::span<T> out) {
    const ScheduleValues v = s.eval(t);
    kernels::axpby<T>(T(v.a), z, T(v.b), eps, out);
}

template <typename T>
void velocity_target_into(std::span<const T> z, std::span<const T> eps, double t, const Schedule& s, std::span<T> out) {
    const ScheduleValues v = s.eval(t);
    kernels::axpby<T>(T(v.a_dot), z, T(v.b_dot), eps, out);
}

template <typename T>
void velocity_to_score_into(std::span<const T> y, std::span<const T> vel, double t, const Schedule& s,
                            std::span<T> out) {
    const ScheduleValues v = s.eval(t);
    require(v.b >= kMinNoiseCoefficient, ErrorKind::Domain,
            "score is singular at t = {} (noise coefficient {} below {})", t, v.b, kMinNoiseCoefficient);
    const double denom = v.b * (v.a * v.b_dot - v.a_dot * v.b);
    require(denom != 0.0, ErrorKind::Domain, "score is singular at t = {}", t);
    kernels::axpby<T>(T(v.a_dot / denom), y, T(-v.a / denom), vel, out);
}

template <typename T>
NoisyState<T> corrupt(const Tensor<T>& z, const Tensor<T>& eps, double t, const Schedule& s) {
    require_same_shape(z.shape(), eps.shape(), "corrupt");
    NoisyState<T> st{Tensor<T>(z.shape()), t, eps};
    corrupt_into<T>(z.span(), eps.span(), t, s, st.y.span());
    return st;
}

template <typename T>
Tensor<T> velocity_target(const Tensor<T>& z, const Tensor<T>& eps, double t, const Schedule& s) {
    require_same_shape(z.shape(), eps.shape(), "velocity_target");
    Tensor<T> out(z.shape());
    velocity_target_into<T>(z.span(), eps.span(), t, s, out.span());
    return out;
}

template <typename T>
Tensor<T> velocity_to_score(const Tensor<T>& y, const Tensor<T>& v, double t, const Schedule& s) {
    require_same_shape(y.shape(), v.shape(), "velocity_to_score");
    Tensor<T> out(y.shape());
    velocity_to_score_into<T>(y.span(), v.span(), t, s, out.span());
    return out;
}

#define VAEREPA_INSTANTIATE(T)                                                                                   \
    template NoisyState<T> corrupt<T>(const Tensor<T>&, const Tensor<T>&, double, const Schedule&);              \
    template Tensor<T> velocity_target<T>(const Tensor<T>&, const Tensor<T>&, double, const Schedule&);          \
    template Tensor<T> velocity_to_score<T>(const Tensor<T>&, const Tensor<T>&, double, const Schedule&);        \
    template void corrupt_into<T>(std::span<const T>, std::span<const T>, double, const Schedule&, std::span<T>); \
    template void velocity_target_into<T>(std::span<const T>, std::span<const T>, double, const Schedule&,       \
                                          std::span<T>);                                                         \
    template void velocity_to_score_into<T>(std::span<const T>, std::span<const T>, double, const Schedule&,     \
                                            std::span<T>);

VAEREPA_INSTANTIATE(float)
VAEREPA_INSTANTIATE(double)

}  // namespace vaerepa::interpolant
