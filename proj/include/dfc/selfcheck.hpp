#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfc/checkpoint.hpp"
#include "dfc/correspondence.hpp"

namespace dfc {

struct GroupCheck {
  std::string name;
  double rel_error = 0.0;  // ||g_fd - g|| / max(||g_fd||, ||g||)
  std::size_t count = 0;
  std::size_t refined = 0;  // entries whose stencil straddled a kink
};

/// Central finite differences of the mean BCE of the model's logits against
/// corrs.labels (train-mode BN) for every trainable tensor, compared with the
/// analytic backward pass. When the two one-sided differences of an entry
/// disagree, a ReLU or max-pool switch lies inside the stencil; such entries
/// are re-measured with step / 100.
std::vector<GroupCheck> check_model_gradients(DfcModel& model, const CorrespondenceSet& corrs,
                                              double step = 1e-5);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// The embedded oracle suite behind the selfcheck subcommand.
std::vector<CheckResult> run_selfcheck(std::uint64_t seed);

}  // namespace dfc
