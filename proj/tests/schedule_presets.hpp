#pragma once

// Reference schedule settings, one row per dataset and noise level.

#include <array>
#include <string_view>

struct SchedulePreset {
  std::string_view file;  // under presets/
  int e_s;
  double a;
  double p;
  double q;
  double lambda;
};

inline constexpr std::array<SchedulePreset, 30> kSchedulePresets = {{
    {"mnist_noise00", 2, 0.35, 1.56, 12, 0},
    {"mnist_noise20", 2, 0.50, 1.05, 2, 8e-3},
    {"mnist_noise40", 2, 0.10, 0.97, 18, 0},
    {"mnist_noise60", 2, 0.10, 0.61, 16, 0},
    {"mnist_noise80", 2, 0.12, 1.20, 14, 0.09},
    {"cifar10_noise00", 4, 0.25, 1.92, 81, 0},
    {"cifar10_noise20", 3, 0.27, 0.54, 60, 0},
    {"cifar10_noise40", 3, 0.27, 0.54, 60, 0},
    {"cifar10_noise60", 3, 0.27, 0.54, 60, 0},
    {"cifar100_noise00", 4, 0.25, 1.92, 81, 0},
    {"cifar100_noise20", 4, 0.25, 1.92, 81, 0},
    {"cifar100_noise40", 3, 0.27, 0.54, 60, 0},
    {"cifar100_noise60", 2, 0.37, 2.25, 75, 0},
    {"utkface_smooth_l1_noise00", 3, 0.42, 1.40, 41, 0.09},
    {"utkface_smooth_l1_noise20", 2, 0.46, 1.25, 50, 0.01},
    {"utkface_smooth_l1_noise40", 2, 0.46, 1.25, 50, 0.01},
    {"utkface_smooth_l1_noise60", 4, 0.25, 1.92, 28, 3e-6},
    {"utkface_smooth_l1_noise80", 3, 0.42, 1.40, 41, 0.09},
    {"utkface_l2_noise00", 3, 0.42, 1.40, 41, 0.09},
    {"utkface_l2_noise20", 2, 0.46, 1.25, 50, 0.01},
    {"utkface_l2_noise40", 2, 0.46, 1.25, 50, 0.01},
    {"utkface_l2_noise60", 2, 0.46, 1.25, 50, 0.01},
    {"utkface_l2_noise80", 3, 0.42, 1.40, 41, 0.09},
    {"digit_sum_noise00", 3, 1.51, 3.17, 67, 9e-8},
    {"digit_sum_noise20", 3, 0.48, 3.03, 57, 0.550},
    {"digit_sum_noise40", 3, 1.18, 0.23, 54, 0.105},
    {"digit_sum_noise60", 3, 1.09, 1.37, 75, 0.145},
    {"clothing1m", 3, 0.26, 0.68, 5, 0},
    {"clothing1m_superloss", 3, 0.16, 1.07, 3, 0},
    {"wikihow", 3, 0.2, 1.2, 10, 1e-6},
}};

// The first 27 rows are the per-noise-level table.
inline constexpr std::size_t kNoiseLevelPresets = 27;
