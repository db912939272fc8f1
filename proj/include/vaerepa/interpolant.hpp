// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

// Stochastic interpolant y_t = a(t) z + b(t) eps between data (t = 0) and
// Gaussian noise (t = 1), its velocity target and the velocity -> score map.

#pragma once

#include <span>

#include "vaerepa/tensor.hpp"

namespace vaerepa::interpolant {

enum class ScheduleKind { Linear };

struct ScheduleValues {
    double a, b, a_dot, b_dot;
};

/// Score conversion is refused when b(t) falls below this value.
inline constexpr double kMinNoiseCoefficient = 1e-6;

class Schedule {
public:
    explicit Schedule(ScheduleKind kind = ScheduleKind::Linear) : kind_(kind) {}

    ScheduleKind kind() const noexcept { return kind_; }

    /// Throws ErrorKind::Domain unless 0 <= t <= 1.
    ScheduleValues eval(double t) const;

private:
    ScheduleKind kind_;
};

template <typename T>
struct NoisyState {
    Tensor<T> y;
    double t;
    Tensor<T> eps;
};

template <typename T>
NoisyState<T> corrupt(const Tensor<T>& z, const Tensor<T>& eps, double t, const Schedule& s = Schedule{});

template <typename T>
Tensor<T> velocity_target(const Tensor<T>& z, const Tensor<T>& eps, double t, const Schedule& s = Schedule{});

/// (a_dot y - a v) / (b (a b_dot - a_dot b)). Throws ErrorKind::Domain when
/// b(t) < kMinNoiseCoefficient.
template <typename T>
Tensor<T> velocity_to_score(const Tensor<T>& y, const Tensor<T>& v, double t, const Schedule& s = Schedule{});

// Span forms used on batched buffers; `out` may alias neither input.
template <typename T>
void corrupt_into(std::span<const T> z, std::span<const T> eps, double t, const Schedule& s, std::span<T> out);
template <typename T>
void velocity_target_into(std::span<const T> z, std::span<const T> eps, double t, const Schedule& s, std::span<T> out);
template <typename T>
void velocity_to_score_into(std::span<const T> y, std::span<const T> v, double t, const Schedule& s, std::span<T> out);

}  // namespace vaerepa::interpolant
