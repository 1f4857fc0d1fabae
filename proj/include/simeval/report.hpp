#pragma once

// Aggregate tables, label distributions, per-turn breakdowns and agreement statistics, with
// CSV / markdown / plot-data emitters.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simeval/metrics.hpp"

namespace simeval {

struct MetricCell {
    std::optional<double> mean;  // empty when no report had the metric applicable
    std::size_t count = 0;
};

struct MetricRow {
    std::string group;  // system or method name
    std::array<MetricCell, 7> cells;
    std::size_t reports = 0;
};

struct MetricTable {
    std::vector<MetricRow> rows;  // sorted by group
};

/// Per-group mean of applicable values per metric. Throws PreconditionError on empty input.
MetricTable metric_table(const std::vector<MetricReport>& reports);

/// Cohen's kappa. p_e = 1 yields 1.0 when p_o = 1, else 0.0. Throws PreconditionError on a
/// length mismatch or empty input.
double cohen_kappa(std::span<const std::string> a, std::span<const std::string> b);

/// Pearson product-moment correlation; nullopt when either side has zero variance.
/// Throws PreconditionError on a length mismatch or fewer than 2 values.
std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y);

struct LabelDistribution {
    struct Row {
        std::string group;
        std::map<std::string, double> proportions;
        std::size_t total = 0;
        bool empty() const { return total == 0; }
    };
    std::vector<Row> rows;
    std::vector<std::string> labels;  // column order
};

/// Proportions per group. `labels` fixes column order; labels seen but not listed are appended.
LabelDistribution label_distribution(const std::map<std::string, std::vector<std::string>>& by_group,
                                     std::vector<std::string> labels = {});

/// Act and correctness labels of candidates, grouped by system.
LabelDistribution act_distribution(const std::vector<MetricReport>& reports);
LabelDistribution correctness_distribution(const std::vector<MetricReport>& reports);

struct TurnBreakdown {
    int max_pair_index = 15;
    // group -> rows 0..max_pair_index
    std::map<std::string, std::vector<std::array<MetricCell, 7>>> groups;
};

TurnBreakdown per_turn_breakdown(const std::vector<MetricReport>& reports, int max_pair_index = 15);

enum class EmitFormat { csv, markdown, plotdata_json };
EmitFormat emit_format_from_string(std::string_view s);
std::string_view extension(EmitFormat f);

std::string render(const MetricTable& t, EmitFormat f);
std::string render(const LabelDistribution& d, EmitFormat f);
std::string render(const TurnBreakdown& b, EmitFormat f);

/// Writes the rendered bytes; throws IoError.
void write_text(const std::filesystem::path& path, const std::string& bytes);

}  // namespace simeval
