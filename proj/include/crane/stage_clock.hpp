#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <string_view>

namespace crane {

enum class Stage : std::size_t { Rca, Sparse, Similarity, Loss, Optimizer, Count };

std::string_view to_string(Stage s);

/// Accumulated wall time per pipeline stage.
class StageClock {
 public:
  void add(Stage s, double seconds) { totals_[static_cast<std::size_t>(s)] += seconds; }
  double seconds(Stage s) const { return totals_[static_cast<std::size_t>(s)]; }
  void reset() { totals_.fill(0.0); }

 private:
  std::array<double, static_cast<std::size_t>(Stage::Count)> totals_{};
};

class ScopedStage {
 public:
  ScopedStage(StageClock* clock, Stage stage)
      : clock_(clock), stage_(stage), start_(std::chrono::steady_clock::now()) {}
  ~ScopedStage() {
    if (clock_ != nullptr) {
      const auto elapsed = std::chrono::steady_clock::now() - start_;
      clock_->add(stage_, std::chrono::duration<double>(elapsed).count());
    }
  }
  ScopedStage(const ScopedStage&) = delete;
  ScopedStage& operator=(const ScopedStage&) = delete;

 private:
  StageClock* clock_;
  Stage stage_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace crane
