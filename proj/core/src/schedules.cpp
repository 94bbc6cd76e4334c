#include "paradiff/schedules.hpp"

#include "paradiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace paradiff {

namespace {

constexpr double kCosineOffset = 0.008;
constexpr double kSqrtOffset = 1e-4;

void check_range(int T, int t) {
    if (T < 1) throw DomainError("schedule: T must be >= 1, got " + std::to_string(T));
    if (t < 0 || t > T) {
        throw DomainError("schedule: t=" + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
    }
}

double cosine_f(double frac) {
    const double c = std::cos((frac + kCosineOffset) / (1.0 + kCosineOffset) * std::numbers::pi / 2.0);
    return c * c;
}

}  // namespace

std::string_view to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::paraguide: return "paraguide";
        case ScheduleKind::cosine: return "cosine";
        case ScheduleKind::sqrt: return "sqrt";
    }
    return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
    if (name == "paraguide") return ScheduleKind::paraguide;
    if (name == "cosine") return ScheduleKind::cosine;
    if (name == "sqrt") return ScheduleKind::sqrt;
    throw ConfigError("unknown schedule kind: " + std::string(name));
}

double alpha_bar(ScheduleKind kind, int T, int t) {
    check_range(T, t);
    const double frac = static_cast<double>(t) / static_cast<double>(T);
    switch (kind) {
        case ScheduleKind::paraguide:
            return std::sqrt(static_cast<double>(T - t) / static_cast<double>(T));
        case ScheduleKind::cosine:
            return cosine_f(frac) / cosine_f(0.0);
        case ScheduleKind::sqrt:
            return std::max(0.0, 1.0 - std::sqrt(frac + kSqrtOffset));
    }
    throw DomainError("schedule: unknown kind");
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, int T) : kind_(kind), T_(T) {
    if (T < 1) throw DomainError("schedule: T must be >= 1");
    alpha_bar_.reserve(static_cast<std::size_t>(T) + 1);
    for (int t = 0; t <= T; ++t) alpha_bar_.push_back(paradiff::alpha_bar(kind, T, t));
}

double NoiseSchedule::alpha_bar(int t) const {
    check_range(T_, t);
    return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::signal_scale(int t) const { return std::sqrt(alpha_bar(t)); }

double NoiseSchedule::noise_scale(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }

double guidance_strength(double lambda_base, int t, int T) {
    check_range(T, t);
    if (t == 0 || t == T) return 0.0;
    return lambda_base * std::sin(std::numbers::pi * static_cast<double>(t) / static_cast<double>(T));
}

GuidanceSchedule::GuidanceSchedule(double lambda_base, int T) : lambda_base_(lambda_base), T_(T) {
    if (!(lambda_base >= 0.0)) throw DomainError("guidance schedule: lambda must be >= 0");
    if (T < 1) throw DomainError("guidance schedule: T must be >= 1");
}

}  // namespace paradiff
