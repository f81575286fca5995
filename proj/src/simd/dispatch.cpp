#include <atomic>
#include <cstdlib>
#include <string>

#include "mpnn/simd/kernels.hpp"

namespace mpnn::simd {
namespace {

const KernelTable* detect() {
  // MPNN_ISA=scalar pins the reference kernels, e.g. for A/B timing.
  if (const char* env = std::getenv("MPNN_ISA")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2_kernels()) return avx2_kernels();
    if (want == "neon" && neon_kernels()) return neon_kernels();
  }
  if (const KernelTable* t = avx2_kernels()) return t;
  if (const KernelTable* t = neon_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

thread_local std::uint64_t g_multiplies = 0;

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

std::vector<const KernelTable*> available() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
  if (const KernelTable* t = avx2_kernels()) out.push_back(t);
  if (const KernelTable* t = neon_kernels()) out.push_back(t);
  return out;
}

bool force_isa(Isa isa) {
  const KernelTable* t = nullptr;
  switch (isa) {
    case Isa::kScalar:
      t = &scalar_kernels();
      break;
    case Isa::kAvx2:
      t = avx2_kernels();
      break;
    case Isa::kNeon:
      t = neon_kernels();
      break;
  }
  if (t == nullptr) return false;
  current().store(t, std::memory_order_relaxed);
  return true;
}

void reset_isa() { current().store(detect(), std::memory_order_relaxed); }

std::uint64_t multiply_count() { return g_multiplies; }
void add_multiplies(std::uint64_t count) { g_multiplies += count; }
void reset_multiply_count() { g_multiplies = 0; }

}  // namespace mpnn::simd
