#pragma once

#include <filesystem>
#include <string>

#include "crane/training.hpp"

namespace crane {

/// Standalone SVG with two stacked panels: training loss and validation
/// NDCG@20 against epoch. Each panel's <g> carries data-x-min/-max and
/// data-y-min/-max with its axis range. Output depends only on the log's
/// epoch, loss_total and ndcg20_valid fields. Throws on an empty log.
std::string render_convergence_svg(const ConvergenceLog& log);

void emit_convergence_plot(const ConvergenceLog& log, const std::filesystem::path& out_path);

}  // namespace crane
