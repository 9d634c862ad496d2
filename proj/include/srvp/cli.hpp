#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "srvp/config.hpp"
#include "srvp/data.hpp"
#include "srvp/metrics.hpp"
#include "srvp/model.hpp"

namespace srvp {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

enum class Split { Train, Test };

/// Generator settings for one split. The test split draws from a seed stream
/// disjoint from the training split.
GenerateOptions generate_options(const RunConfig& config, Split split);

/// Holds out the trailing ceil(fraction·S) sequences (at least one) for validation.
std::pair<Dataset, Dataset> split_validation(const Dataset& ds, double fraction);

/// Per-frame metrics of closed-loop predictions over every sequence.
MetricReport evaluate_dataset(const SrvpModel& model, const Dataset& ds);

/// Metrics of repeating the last observed frame P times.
MetricReport copy_last_frame_report(const Dataset& ds, std::size_t input_len,
                                    std::size_t pred_len);

/// Model configuration the gradcheck command starts from before applying a
/// config file: L=2, M=M'=4, H=W=8, N=3, P=2.
RunConfig gradcheck_preset();

/// Entry point of the `srvp` tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace srvp
