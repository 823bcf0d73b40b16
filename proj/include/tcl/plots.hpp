#pragma once

#include <string>
#include <vector>

#include "tcl/metrics.hpp"

namespace tcl {

// Static SVG charts for a finished run: accuracy.svg (group reward, rolling
// train accuracy, held-out points) and tokens.svg (gradient tokens per step).
// No-op for an empty log.
void write_run_plots(const std::vector<MetricsRow>& rows,
                     const std::string& dir);

}  // namespace tcl
