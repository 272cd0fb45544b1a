#include "stsens/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stsens {

namespace {
int g_max_threads = 0;
}

void set_max_threads(int n) { g_max_threads = n < 0 ? 0 : n; }

int max_threads() {
#ifdef _OPENMP
    int hw = omp_get_max_threads();
#else
    int hw = 1;
#endif
    if (g_max_threads > 0 && g_max_threads < hw) return g_max_threads;
    return hw;
}

void init_threads_from_env() {
    const char* env = std::getenv("STSENS_THREADS");
    if (!env) return;
    try {
        int n = std::stoi(env);
        if (n > 0) set_max_threads(n);
    } catch (...) {
        // ignore unparseable values, keep the default
    }
}

void parallel_for(int n, const std::function<void(int)>& fn) {
    int nt = max_threads();
    if (nt <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
    for (int i = 0; i < n; ++i) fn(i);
#else
    for (int i = 0; i < n; ++i) fn(i);
#endif
}

void serial_for(int n, const std::function<void(int)>& fn) {
    for (int i = 0; i < n; ++i) fn(i);
}

}  // namespace stsens
