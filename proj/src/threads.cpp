#include "optcalib/threads.hpp"

#include "optcalib/errors.hpp"

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace optcalib {

int resolve_thread_count(int cli_threads, int config_threads) {
    if (cli_threads < 0) throw ConfigError("thread count must be positive");
    if (cli_threads > 0) return cli_threads;
    if (const char* env = std::getenv("OPTCALIB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw ConfigError("OPTCALIB_THREADS must be a positive integer");
        return static_cast<int>(v);
    }
    if (config_threads < 0) throw ConfigError("thread count must be positive");
    return config_threads;
}

void apply_thread_count(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

}  // namespace optcalib
