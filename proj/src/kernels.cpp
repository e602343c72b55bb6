#include "magnuslab/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace magnuslab::kernels {

extern const Ops scalar_ops;
#ifdef MAGNUSLAB_HAVE_AVX2
extern const Ops avx2_ops;
#endif

namespace {

bool cpu_has_avx2() {
#if defined(MAGNUSLAB_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

std::atomic<const Ops*> g_active{nullptr};

const Ops* detect() {
    // MAGNUSLAB_ISA=scalar|avx2 pins the variant; anything else is an error,
    // silence would hide a typo in an equivalence-test harness.
    if (const char* pin = std::getenv("MAGNUSLAB_ISA")) {
        if (std::strcmp(pin, "scalar") == 0) return &scalar_ops;
#ifdef MAGNUSLAB_HAVE_AVX2
        if (std::strcmp(pin, "avx2") == 0 && cpu_has_avx2()) return &avx2_ops;
#endif
        throw std::runtime_error(std::string("kernels: MAGNUSLAB_ISA='") + pin +
                                 "' is not available on this host");
    }
#ifdef MAGNUSLAB_HAVE_AVX2
    if (cpu_has_avx2()) return &avx2_ops;
#endif
    return &scalar_ops;
}

}  // namespace

const Ops& active() {
    const Ops* ops = g_active.load(std::memory_order_acquire);
    if (!ops) {
        ops = detect();
        g_active.store(ops, std::memory_order_release);
    }
    return *ops;
}

Isa active_isa() {
    return &active() == &scalar_ops ? Isa::scalar : Isa::avx2;
}

bool available(Isa isa) {
    if (isa == Isa::scalar) return true;
    return cpu_has_avx2();
}

const Ops& get(Isa isa) {
    if (isa == Isa::scalar) return scalar_ops;
#ifdef MAGNUSLAB_HAVE_AVX2
    if (cpu_has_avx2()) return avx2_ops;
#endif
    throw std::runtime_error("kernels: requested ISA variant not available on this host");
}

void force(Isa isa) {
    g_active.store(&get(isa), std::memory_order_release);
}

}  // namespace magnuslab::kernels
