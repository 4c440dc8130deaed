#include "silab/kernels.hpp"

namespace silab::kernels {
namespace {

struct Selection {
    const Ops* ops;
    std::string name;
};

Selection detect() {
#ifdef SILAB_BUILD_AVX2
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        return {&kAvx2, "avx2"};
    }
#endif
    return {&kScalar, "scalar"};
}

Selection& selection() {
    static Selection s = detect();
    return s;
}

}  // namespace

const Ops& active() { return *selection().ops; }
const std::string& active_name() { return selection().name; }

bool set_active(const std::string& name) {
    if (name == "scalar") {
        selection() = {&kScalar, "scalar"};
        return true;
    }
#ifdef SILAB_BUILD_AVX2
    if (name == "avx2" && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        selection() = {&kAvx2, "avx2"};
        return true;
    }
#endif
    return false;
}

}  // namespace silab::kernels
