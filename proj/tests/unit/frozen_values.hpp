#pragma once

// Values printed by tests/oracles/derive.py (mpmath, 50 digits), rounded to
// 20 significant digits.
namespace frozen {

inline constexpr double lse_0_m1_m2 = 0.40760596444438030448;
inline constexpr double kl_quarter_vs_half = 0.13081203594113695913;

// Gaussian kernel, S=3, gamma=0.05.
inline constexpr double gauss3_off1 = 1.9151695967140907456e-174;
inline constexpr double gauss3_log_off1 = -399.99999999999995559;
inline constexpr double gauss3_log_off2 = -1599.9999999999998224;

// Uniform kernel power, S=50, gamma=0.005, n=128.
inline constexpr double uniform50_diag = 0.52918921507223021845;
inline constexpr double uniform50_off = 0.0096083833658728526847;

// First AdamW update from zero state, g=0.3, lr=0.1, betas (0.95, 0.99), eps 1e-8.
inline constexpr double adamw_first_step = -0.099999996666666777778;

}  // namespace frozen
