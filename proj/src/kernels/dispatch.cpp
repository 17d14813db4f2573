#include "jmorph/kernels.hpp"

#include "jmorph/errors.hpp"

#include <cstdlib>
#include <string>

namespace jmorph::kernels {

const KernelTable &active_kernels() {
  static const KernelTable &chosen = []() -> const KernelTable & {
    if (const char *env = std::getenv("JMAP_KERNELS")) {
      const std::string want = env;
      if (want == "scalar")
        return scalar_kernels();
      if (want == "avx2") {
        if (const KernelTable *t = avx2_kernels())
          return *t;
        throw ConfigError("JMAP_KERNELS=avx2 but this CPU lacks AVX2/FMA");
      }
      if (!want.empty())
        throw ConfigError("JMAP_KERNELS must be 'scalar' or 'avx2', got '" +
                          want + "'");
    }
    if (const KernelTable *t = avx2_kernels())
      return *t;
    return scalar_kernels();
  }();
  return chosen;
}

} // namespace jmorph::kernels
