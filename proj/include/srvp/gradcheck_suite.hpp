#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srvp/model.hpp"

namespace srvp {

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
  /// Coordinates checked with a reduced step because of a nearby kink.
  std::size_t narrowed = 0;
};

struct GradcheckReport {
  /// One entry per registered op (in OpKind order), then module-level and
  /// end-to-end checks.
  std::vector<GradcheckEntry> entries;
  double tolerance = 1e-4;
  bool passed() const;
  double worst() const;
};

/// Finite-difference checks of every op, the recurrent/attention/reinforced
/// modules, and the full loss of a model built from `config`.
GradcheckReport run_gradcheck_suite(const ModelConfig& config, std::uint64_t seed,
                                    double tolerance = 1e-4);

}  // namespace srvp
