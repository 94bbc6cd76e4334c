#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace paradiff {

enum class ScheduleKind { paraguide, cosine, sqrt };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

// Closed-form signal-retention coefficient alpha_bar(t) for t in [0, T].
//   paraguide: sqrt((T - t) / T)
//   cosine:    f(t) / f(0), f(t) = cos^2(((t/T) + s) / (1 + s) * pi/2), s = 0.008
//   sqrt:      1 - sqrt(t/T + 1e-4), clamped at 0
double alpha_bar(ScheduleKind kind, int T, int t);

// alpha_bar precomputed for t = 0..T.
class NoiseSchedule {
public:
    NoiseSchedule(ScheduleKind kind, int T);

    ScheduleKind kind() const { return kind_; }
    int steps() const { return T_; }
    double alpha_bar(int t) const;
    // sqrt(alpha_bar(t)) and sqrt(1 - alpha_bar(t)): the coefficients on the
    // clean embedding and on the Gaussian draw.
    double signal_scale(int t) const;
    double noise_scale(int t) const;
    const std::vector<double>& table() const { return alpha_bar_; }

private:
    ScheduleKind kind_;
    int T_;
    std::vector<double> alpha_bar_;
};

// lambda * sin(pi t / T); zero at both ends of the reverse process.
double guidance_strength(double lambda_base, int t, int T);

class GuidanceSchedule {
public:
    GuidanceSchedule(double lambda_base, int T);
    double at(int t) const { return guidance_strength(lambda_base_, t, T_); }
    double lambda_base() const { return lambda_base_; }
    int steps() const { return T_; }

private:
    double lambda_base_;
    int T_;
};

}  // namespace paradiff
