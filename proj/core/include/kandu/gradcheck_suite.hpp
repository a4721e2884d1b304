#pragma once

// The 64-bit finite-difference suite behind `kandu gradcheck`: one row per
// differentiable operation, each a small random problem reduced to a scalar
// by a random weighted sum.

#include <cstdint>
#include <string>
#include <vector>

namespace kandu {

inline constexpr double kGradCheckTolerance = 1e-4;

struct GradCheckRow {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t elements = 0;  // number of input elements perturbed
  std::string worst;         // name of the input holding the worst element
  double analytic = 0.0;     // both derivatives at that element
  double numeric = 0.0;
  bool passed() const { return max_relative_error < kGradCheckTolerance; }
};

std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed = 7);

/// Seed of the end-to-end rows. Central differences at eps 1e-5 resolve a
/// derivative only to about 1e-11 (one rounding step of an O(1) loss over
/// 2 * eps), and they are meaningless within eps of a ReLU or max-pool
/// kink. The evaluation point is therefore fixed to one where every
/// nonzero gradient element is well above that resolution and no kink is
/// in reach.
inline constexpr std::uint64_t kTinyModelSeed = 23;

/// Only the end-to-end rows (train and eval mode) of the tiny model at `seed`.
std::vector<GradCheckRow> tiny_model_gradcheck(std::uint64_t seed);

bool all_passed(const std::vector<GradCheckRow>& rows);

/// Fixed-width table, one line per row plus a header.
std::string format_gradcheck_table(const std::vector<GradCheckRow>& rows);

}  // namespace kandu
