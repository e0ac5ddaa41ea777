#include "crane/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "crane/config.hpp"

namespace crane {

namespace {

using nlohmann::json;

[[noreturn]] void fail(std::string_view source, const std::string& what) {
  throw IoError(std::string(source) + ": " + what);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

Index intern(std::string_view id, std::unordered_map<std::string, Index>& index,
             std::vector<std::string>& names) {
  auto [it, inserted] = index.try_emplace(std::string(id), names.size());
  if (inserted) names.emplace_back(id);
  return it->second;
}

constexpr char kMagic[4] = {'C', 'R', 'N', 'F'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 8 + 1;

template <typename T>
T read_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) v |= static_cast<T>(p[b]) << (8 * b);
  return v;
}

template <typename T>
void write_le(std::string& out, T v) {
  for (std::size_t b = 0; b < sizeof(T); ++b)
    out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

json matrix_json(const DenseMatrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

DenseMatrix matrix_from_json(const json& j, const std::string& name) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) {
    throw IoError("checkpoint tensor " + name + ": data length " + std::to_string(data.size()) +
                  " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return DenseMatrix(rows, cols, std::move(data));
}

DenseMatrix& tensor_slot(ParameterTensors& p, const std::string& name) {
  if (name == "id_emb") return p.id_emb;
  if (name == "proj_v") return p.proj_v;
  if (name == "proj_t") return p.proj_t;
  if (name == "w_tr") return p.w_tr;
  if (name == "b_tr") return p.b_tr;
  for (std::size_t m = 0; m < 2; ++m) {
    const std::string tag = std::string(".") + kModalityTags[m];
    if (name == "w_m" + tag) return p.modal[m].w_m;
    if (name == "w_a" + tag) return p.modal[m].w_a;
    if (name == "w_f" + tag) return p.modal[m].w_f;
    if (name == "attention" + tag) return p.modal[m].attention;
  }
  if (name.starts_with("w_gcn.")) {
    Index layer = 0;
    const char* first = name.data() + 6;
    const char* last = name.data() + name.size();
    const auto [ptr, ec] = std::from_chars(first, last, layer);
    if (ec == std::errc() && ptr == last && layer < 64) {
      if (p.w_gcn.size() <= layer) p.w_gcn.resize(layer + 1);
      return p.w_gcn[layer];
    }
  }
  throw IoError("checkpoint: unknown tensor '" + name + "'");
}

}  // namespace

InteractionFile parse_interactions(std::string_view text, std::string_view source) {
  InteractionFile out;
  std::unordered_map<std::string, Index> user_index;
  std::unordered_map<std::string, Index> item_index;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    const std::string where = "line " + std::to_string(line_no);
    const auto fields = split_tabs(line);
    if (fields.size() != 3 && fields.size() != 4) {
      fail(source, where + ": expected 3 or 4 tab-separated fields, found " +
                       std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) fail(source, where + ": empty user or item id");

    double rating = 0.0;
    const char* first = fields[2].data();
    const char* last = first + fields[2].size();
    const auto [ptr, ec] = std::from_chars(first, last, rating);
    if (ec != std::errc() || ptr != last || fields[2].empty()) {
      fail(source, where + ": rating '" + std::string(fields[2]) + "' is not a number");
    }
    out.records.push_back({intern(fields[0], user_index, out.user_ids),
                           intern(fields[1], item_index, out.item_ids), rating});
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

InteractionFile load_interactions(const std::filesystem::path& path) {
  return parse_interactions(read_text_file(path), path.string());
}

DenseMatrix parse_feature_matrix(std::string_view bytes, std::string_view source) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4 || std::memcmp(p, kMagic, 4) != 0) fail(source, "bad magic (want CRNF)");
  if (bytes.size() < kHeaderBytes) fail(source, "header truncated");
  const auto version = read_le<std::uint32_t>(p + 4);
  if (version != kFormatVersion)
    fail(source, "unsupported version " + std::to_string(version));
  const auto rows = read_le<std::uint64_t>(p + 8);
  const auto cols = read_le<std::uint64_t>(p + 16);
  const std::uint8_t dtype = p[24];
  if (dtype > 1) fail(source, "unknown dtype tag " + std::to_string(dtype));
  const std::size_t width = dtype == 0 ? 4 : 8;
  const std::size_t payload = bytes.size() - kHeaderBytes;
  const bool overflow = cols != 0 && rows > std::numeric_limits<std::uint64_t>::max() / cols / width;
  if (overflow || rows * cols * width != payload) {
    fail(source, "length: header declares " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " but payload has " + std::to_string(payload) + " bytes");
  }

  DenseMatrix m(rows, cols);
  auto out = m.data();
  const unsigned char* v = p + kHeaderBytes;
  for (std::size_t i = 0; i < out.size(); ++i, v += width) {
    out[i] = dtype == 0 ? static_cast<double>(std::bit_cast<float>(read_le<std::uint32_t>(v)))
                        : std::bit_cast<double>(read_le<std::uint64_t>(v));
  }
  return m;
}

DenseMatrix load_feature_matrix(const std::filesystem::path& path) {
  return parse_feature_matrix(read_text_file(path), path.string());
}

std::string encode_feature_matrix(const DenseMatrix& m, FeatureDtype dtype) {
  std::string out(kMagic, 4);
  write_le<std::uint32_t>(out, kFormatVersion);
  write_le<std::uint64_t>(out, m.rows());
  write_le<std::uint64_t>(out, m.cols());
  out.push_back(static_cast<char>(dtype));
  for (double x : m.data()) {
    if (dtype == FeatureDtype::F32)
      write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    else
      write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

void save_feature_matrix(const std::filesystem::path& path, const DenseMatrix& m,
                         FeatureDtype dtype) {
  write_text_file(path, encode_feature_matrix(m, dtype));
}

std::string format_split(const DataSplit& split, const PreprocessResult& pre,
                         const InteractionFile& file) {
  std::string out;
  auto emit = [&](std::string_view phase, const std::vector<Interaction>& pairs) {
    for (const auto& e : pairs) {
      out += phase;
      out += '\t';
      out += file.user_ids.at(pre.user_origin.at(e.user));
      out += '\t';
      out += file.item_ids.at(pre.item_origin.at(e.item));
      out += '\n';
    }
  };
  emit("train", split.train);
  emit("valid", split.valid);
  emit("test", split.test);
  return out;
}

std::string metrics_json(const MetricContext& ctx, const std::vector<MetricRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"dataset", ctx.dataset},
                   {"split_seed", ctx.split_seed},
                   {"phase", to_string(r.phase)},
                   {"K", r.k},
                   {"recall", r.recall},
                   {"ndcg", r.ndcg},
                   {"n_users", r.n_users}});
  }
  return out.dump(2) + "\n";
}

std::string convergence_jsonl(const ConvergenceLog& log) {
  std::string out;
  for (const auto& r : log) {
    const json line{{"epoch", r.epoch},
                    {"loss", r.loss_total},
                    {"loss_bpr", r.loss_bpr},
                    {"loss_cl", r.loss_cl},
                    {"recall20_valid", r.recall20_valid},
                    {"ndcg20_valid", r.ndcg20_valid},
                    {"epoch_seconds", r.epoch_seconds}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::string checkpoint_json(const Checkpoint& ckpt) {
  const TrainedModel& model = ckpt.model;
  json branches = json::array();
  for (std::size_t b = 0; b < model.branches.size(); ++b) {
    json tensors = json::object();
    model.branches[b].for_each(
        [&](const std::string& name, const DenseMatrix& m) { tensors[name] = matrix_json(m); });
    const SemanticGraph& g = model.semantic[b];
    json semantic = nullptr;
    if (g.s_tilde.n_rows > 0) {
      semantic = {{"k", g.k},
                  {"source_epoch", g.source_epoch},
                  {"n", g.s_tilde.n_rows},
                  {"row_offsets", g.s_tilde.row_offsets},
                  {"col_indices", g.s_tilde.col_indices},
                  {"values", g.s_tilde.values}};
    }
    branches.push_back({{"version", model.branches[b].version},
                        {"tensors", std::move(tensors)},
                        {"semantic", std::move(semantic)}});
  }
  const json out{{"format", "crane-checkpoint"},
                 {"format_version", 1},
                 {"config", ckpt.config_text},
                 {"best_epoch", ckpt.best_epoch},
                 {"branches", std::move(branches)}};
  return out.dump() + "\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.at("format") != "crane-checkpoint" || j.at("format_version") != 1)
      throw IoError("checkpoint: unsupported format or format_version");
    Checkpoint ckpt;
    ckpt.config_text = j.at("config").get<std::string>();
    ckpt.best_epoch = j.at("best_epoch").get<Index>();
    ckpt.model.structures = structures_for(parse_config(ckpt.config_text));
    const json& branches = j.at("branches");
    if (branches.size() != ckpt.model.structures.size()) {
      throw IoError("checkpoint: " + std::to_string(branches.size()) + " branches but the config " +
                    "defines " + std::to_string(ckpt.model.structures.size()));
    }
    for (const json& b : branches) {
      ModelParameters p;
      p.version = b.at("version").get<std::uint64_t>();
      for (const auto& [name, tensor] : b.at("tensors").items())
        tensor_slot(p, name) = matrix_from_json(tensor, name);
      for (std::size_t l = 0; l < p.w_gcn.size(); ++l) {
        if (p.w_gcn[l].empty()) throw IoError("checkpoint: missing w_gcn." + std::to_string(l));
      }
      ckpt.model.branches.push_back(std::move(p));

      SemanticGraph g;
      const json& s = b.at("semantic");
      if (!s.is_null()) {
        g.k = s.at("k").get<Index>();
        g.source_epoch = s.at("source_epoch").get<Index>();
        g.s_tilde.n_rows = g.s_tilde.n_cols = s.at("n").get<Index>();
        g.s_tilde.row_offsets = s.at("row_offsets").get<std::vector<Index>>();
        g.s_tilde.col_indices = s.at("col_indices").get<std::vector<Index>>();
        g.s_tilde.values = s.at("values").get<std::vector<double>>();
        try {
          g.s_tilde.validate();
        } catch (const std::logic_error& e) {
          throw IoError(std::string("checkpoint semantic graph: ") + e.what());
        }
      }
      ckpt.model.semantic.push_back(std::move(g));
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace crane
