#pragma once

// The nlsplit command line: config in, report.json and trajectory CSV out.
//
// Exit codes: 0 all asserted residuals below tolerance, 1 a verification
// failed, 2 configuration or usage error, 3 numerical failure.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "nls/numerics.hpp"

namespace nls {

/// Runs one command; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Shortest round-trip decimal for a double.
std::string format_real(double d);

/// Header "t," + names, then one row per recorded time with the state and
/// diagnostics, each line terminated by a line feed.
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<std::string>& state_names,
                          const TrajectoryRecord& tr);

}  // namespace nls
