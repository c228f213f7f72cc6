#include "ogpssm/parallel.hpp"

#include <cstdlib>
#include <string>

namespace ogpssm {

int max_threads() {
  static const int cached = [] {
    if (const char* env = std::getenv("ONLINEGPSSM_THREADS")) {
      try {
        const int n = std::stoi(env);
        if (n >= 1) return n;
      } catch (...) {
      }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return cached;
}

}  // namespace ogpssm
