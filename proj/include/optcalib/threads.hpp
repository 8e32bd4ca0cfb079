#pragma once

namespace optcalib {

// Worker-count resolution, highest priority first: CLI flag, the
// OPTCALIB_THREADS environment variable, config value. 0 means "unset";
// a resolved 0 leaves the runtime default untouched.
int resolve_thread_count(int cli_threads, int config_threads);
void apply_thread_count(int n);

}  // namespace optcalib
