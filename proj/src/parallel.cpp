#include "crane/parallel.hpp"

#include <cstdlib>
#include <string>

namespace crane {

std::size_t threads_from_env() {
  const char* raw = std::getenv("CRANE_THREADS");
  if (raw == nullptr) return 1;
  try {
    const long v = std::stol(raw);
    return v > 0 ? static_cast<std::size_t>(v) : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

}  // namespace crane
