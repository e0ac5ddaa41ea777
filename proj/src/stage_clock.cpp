#include "crane/stage_clock.hpp"

namespace crane {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Rca:
      return "rca";
    case Stage::Sparse:
      return "sparse";
    case Stage::Similarity:
      return "similarity";
    case Stage::Loss:
      return "loss";
    case Stage::Optimizer:
      return "optimizer";
    case Stage::Count:
      break;
  }
  return "unknown";
}

}  // namespace crane
