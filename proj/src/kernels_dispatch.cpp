// Runtime backend selection: cpuid gate plus GLOSSLM_KERNELS override.

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "glosslm/common.hpp"
#include "glosslm/kernels.hpp"

namespace glosslm {
namespace kernels {

#ifndef GLOSSLM_WITH_AVX2
const Backend* avx2_backend() { return nullptr; }
#endif

bool cpu_has_avx2() {
#if defined(__GNUC__) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

std::atomic<const Backend*> g_active{nullptr};

const Backend* resolve(const char* name) {
  if (std::strcmp(name, "scalar") == 0) return &scalar_backend();
  if (std::strcmp(name, "avx2") == 0) {
    const Backend* b = avx2_backend();
    if (b == nullptr || !cpu_has_avx2())
      throw DomainError("avx2 kernels unavailable on this host");
    return b;
  }
  if (std::strcmp(name, "auto") == 0) {
    const Backend* b = avx2_backend();
    if (b != nullptr && cpu_has_avx2()) return b;
    return &scalar_backend();
  }
  throw DomainError(std::string("unknown kernel backend '") + name +
                    "' (expected scalar, avx2, or auto)");
}

const Backend* initial_backend() {
  const char* env = std::getenv("GLOSSLM_KERNELS");
  return resolve(env != nullptr && *env != '\0' ? env : "auto");
}

}  // namespace

const Backend& active() {
  const Backend* b = g_active.load(std::memory_order_acquire);
  if (b == nullptr) {
    b = initial_backend();
    g_active.store(b, std::memory_order_release);
  }
  return *b;
}

void set_backend(const char* name) {
  g_active.store(resolve(name), std::memory_order_release);
}

}  // namespace kernels
}  // namespace glosslm
