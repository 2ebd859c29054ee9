#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flowdeblur {

// Finite-difference checks of the hand-written backward passes, in double.
struct GradcheckReport {
  std::string op;
  std::uint64_t seed = 0;
  int checked = 0;          // number of scalar derivatives compared
  int rejected = 0;         // probes discarded for straddling a kink
  double worst_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed() const { return worst_rel_err <= tolerance; }
};

inline constexpr double kOpGradTolerance = 1e-4;
inline constexpr double kPipelineGradTolerance = 1e-3;

const std::vector<std::string>& gradcheck_ops();

// |a - n| / max(|a|, |n|, floor). The floor keeps derivatives that are zero up
// to rounding from dominating; callers pass 1e-2 times the largest analytic
// magnitude in the tensor being checked.
double relative_error(double analytic, double numeric, double floor);

// op is one of conv, deconv, svrnn, warp, pipeline. Throws ValueError otherwise.
GradcheckReport gradcheck(const std::string& op, std::uint64_t seed);

}  // namespace flowdeblur
