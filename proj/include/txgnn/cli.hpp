#pragma once

// Command-line surface: dataset generation, training, evaluation, and the
// reducer/fanout experiment tables.  Every command records a run manifest
// (resolved settings plus content hashes of its inputs) from which `rerun`
// reproduces the outputs bit-identically.

namespace txgnn {

/// Dispatches argv to one of: generate, train, evaluate, ablate-timestamps,
/// fanout-sweep, rerun.  Returns the process exit code: 0 success, 1 runtime
/// failure, 2 usage or configuration error.
int run_cli(int argc, const char* const* argv);

} // namespace txgnn
