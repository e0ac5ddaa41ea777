#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "crane/dataset.hpp"
#include "crane/dense.hpp"
#include "crane/metrics.hpp"
#include "crane/training.hpp"

namespace crane {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parsed interactions file. Record indices address user_ids / item_ids,
/// which are in first-appearance order.
struct InteractionFile {
  std::vector<RawInteraction> records;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
};

/// `user<TAB>item<TAB>rating[<TAB>timestamp]` per line, LF or CRLF. Blank
/// lines are skipped. Errors carry the source name and line number.
InteractionFile parse_interactions(std::string_view text, std::string_view source = "<memory>");
InteractionFile load_interactions(const std::filesystem::path& path);

enum class FeatureDtype : std::uint8_t { F32 = 0, F64 = 1 };

/// Binary feature matrix: "CRNF", u32 version 1, u64 rows, u64 cols,
/// u8 dtype, then row-major little-endian values.
DenseMatrix parse_feature_matrix(std::string_view bytes, std::string_view source = "<memory>");
DenseMatrix load_feature_matrix(const std::filesystem::path& path);
std::string encode_feature_matrix(const DenseMatrix& m, FeatureDtype dtype = FeatureDtype::F64);
void save_feature_matrix(const std::filesystem::path& path, const DenseMatrix& m,
                         FeatureDtype dtype = FeatureDtype::F64);

/// One line per pair, `phase<TAB>user<TAB>item` with the file's original
/// IDs, train then valid then test, each sorted by (user, item).
std::string format_split(const DataSplit& split, const PreprocessResult& pre,
                         const InteractionFile& file);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Metric table as a JSON array of row objects.
struct MetricContext {
  std::string dataset;
  std::uint64_t split_seed = 0;
};
std::string metrics_json(const MetricContext& ctx, const std::vector<MetricRow>& rows);

/// One JSON object per epoch, newline-terminated.
std::string convergence_jsonl(const ConvergenceLog& log);

/// Checkpoint: canonical config text, best epoch and, per branch, every
/// parameter tensor and the item-graph support.
struct Checkpoint {
  std::string config_text;
  Index best_epoch = 0;
  TrainedModel model;
};
std::string checkpoint_json(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);

}  // namespace crane
