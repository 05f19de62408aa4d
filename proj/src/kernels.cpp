#include "mvae/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

#include "mvae/errors.hpp"

namespace mvae::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

Backend resolve_initial() {
    if (const char* env = std::getenv("MVAE_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!backend_supported(Backend::avx2))
                throw ConfigError("MVAE_KERNELS=avx2 but this host has no avx2 backend");
            return Backend::avx2;
        }
        throw ConfigError(std::string("unknown MVAE_KERNELS value: ") + env);
    }
    return backend_supported(Backend::avx2) ? Backend::avx2 : Backend::scalar;
}

struct Dispatch {
    Backend backend;
    const KernelTable* table;
    Dispatch() : backend(resolve_initial()) {
        table = backend == Backend::avx2 ? avx2_table() : &scalar_table();
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

}  // namespace

bool backend_supported(Backend b) {
    switch (b) {
        case Backend::scalar: return true;
        case Backend::avx2: return avx2_table() != nullptr && cpu_has_avx2();
    }
    return false;
}

const char* backend_name(Backend b) {
    return b == Backend::avx2 ? "avx2" : "scalar";
}

Backend active_backend() { return dispatch().backend; }

void set_backend(Backend b) {
    if (!backend_supported(b))
        throw ConfigError(std::string("kernel backend not supported on this host: ") +
                          backend_name(b));
    dispatch().backend = b;
    dispatch().table = b == Backend::avx2 ? avx2_table() : &scalar_table();
}

const KernelTable& active() { return *dispatch().table; }

}  // namespace mvae::kernels
