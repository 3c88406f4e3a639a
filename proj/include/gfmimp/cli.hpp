#pragma once

namespace gfmimp {

/// Command-line front end: parses arguments, dispatches one subcommand
/// (curve | index | sweep | scan | check | demo | rerun), writes output
/// files plus a manifest into the chosen directory, and returns the
/// process exit code.
///
/// Exit codes, stable for CI use:
///   0  success (including partial scans, which warn on stderr)
///   2  configuration error (bad flags, bad parameter file, unknown
///      preset, malformed CSV input)
///   3  model or simulation error (infeasible operating point,
///      divergence, unstable operating point for a time-domain command)
///   4  no exclusion band detected (corner finding failed)
///   5  compliance check ran and failed
int run_cli(int argc, const char* const* argv);

}  // namespace gfmimp
