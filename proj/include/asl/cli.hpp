#pragma once

#include <iosfwd>

#include "asl/model.hpp"

namespace asl {

/// Entry point of the aslnet tool; returns the process exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// True when a summary matches the published layer table for 30 classes:
/// every output shape, every per-layer count, and the three totals.
bool matches_reference_table(const ModelSummary& s);

}  // namespace asl
