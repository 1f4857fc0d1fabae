#include "simeval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "simeval/error.hpp"
#include "simeval/json_io.hpp"

namespace simeval {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

void accumulate(std::array<MetricCell, 7>& cells, std::array<double, 7>& sums, const MetricReport& r) {
    for (std::size_t k = 0; k < 7; ++k) {
        const auto& v = r.metrics[k];
        if (!v.applicable()) continue;
        sums[k] += *v.value;
        ++cells[k].count;
    }
}

void finish(std::array<MetricCell, 7>& cells, const std::array<double, 7>& sums) {
    for (std::size_t k = 0; k < 7; ++k)
        if (cells[k].count) cells[k].mean = sums[k] / static_cast<double>(cells[k].count);
}

}  // namespace

MetricTable metric_table(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw PreconditionError("metric_table needs at least one report");
    std::map<std::string, std::pair<MetricRow, std::array<double, 7>>> acc;
    for (const auto& r : reports) {
        auto& [row, sums] = acc[r.group_key()];
        row.group = r.group_key();
        ++row.reports;
        accumulate(row.cells, sums, r);
    }
    MetricTable t;
    for (auto& [g, p] : acc) {
        finish(p.first.cells, p.second);
        t.rows.push_back(std::move(p.first));
    }
    return t;
}

double cohen_kappa(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.size() != b.size()) throw PreconditionError("kappa inputs differ in length");
    if (a.empty()) throw PreconditionError("kappa needs at least one pair");
    const double n = static_cast<double>(a.size());
    std::map<std::string, double> ma, mb;
    double agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma[a[i]] += 1;
        mb[b[i]] += 1;
        if (a[i] == b[i]) agree += 1;
    }
    const double po = agree / n;
    double pe = 0;
    for (const auto& [label, count] : ma)
        if (auto it = mb.find(label); it != mb.end()) pe += (count / n) * (it->second / n);
    if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
    return (po - pe) / (1.0 - pe);
}

std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw PreconditionError("pearson inputs differ in length");
    if (x.size() < 2) throw PreconditionError("pearson needs at least 2 pairs");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

LabelDistribution label_distribution(const std::map<std::string, std::vector<std::string>>& by_group,
                                     std::vector<std::string> labels) {
    LabelDistribution d;
    std::set<std::string> known(labels.begin(), labels.end());
    for (const auto& [g, v] : by_group)
        for (const auto& l : v)
            if (known.insert(l).second) labels.push_back(l);
    d.labels = std::move(labels);
    for (const auto& [g, v] : by_group) {
        LabelDistribution::Row row;
        row.group = g;
        row.total = v.size();
        if (!v.empty()) {
            for (const auto& l : d.labels) row.proportions[l] = 0.0;
            for (const auto& l : v) row.proportions[l] += 1.0;
            for (auto& [l, p] : row.proportions) p /= static_cast<double>(v.size());
        }
        d.rows.push_back(std::move(row));
    }
    return d;
}

LabelDistribution act_distribution(const std::vector<MetricReport>& reports) {
    std::map<std::string, std::vector<std::string>> g;
    for (const auto& r : reports) {
        auto& v = g[r.group_key()];
        if (r.labels.act) v.emplace_back(to_string(*r.labels.act));
    }
    std::vector<std::string> labels;
    for (auto a : kAllActs) labels.emplace_back(to_string(a));
    return label_distribution(g, labels);
}

LabelDistribution correctness_distribution(const std::vector<MetricReport>& reports) {
    std::map<std::string, std::vector<std::string>> g;
    for (const auto& r : reports) {
        auto& v = g[r.group_key()];
        if (r.labels.correctness) v.emplace_back(to_string(*r.labels.correctness));
    }
    std::vector<std::string> labels;
    for (auto c : kAllCorrectness) labels.emplace_back(to_string(c));
    return label_distribution(g, labels);
}

TurnBreakdown per_turn_breakdown(const std::vector<MetricReport>& reports, int max_pair_index) {
    if (max_pair_index < 0) throw PreconditionError("max_pair_index must be >= 0");
    TurnBreakdown b;
    b.max_pair_index = max_pair_index;
    const auto rows = static_cast<std::size_t>(max_pair_index) + 1;
    std::map<std::string, std::vector<std::array<double, 7>>> sums;
    for (const auto& r : reports) {
        if (r.pair_index < 0 || r.pair_index > max_pair_index) continue;
        auto& cells = b.groups[r.group_key()];
        auto& s = sums[r.group_key()];
        if (cells.empty()) {
            cells.resize(rows);
            s.resize(rows);
        }
        accumulate(cells[r.pair_index], s[r.pair_index], r);
    }
    for (auto& [g, cells] : b.groups)
        for (std::size_t i = 0; i < rows; ++i) finish(cells[i], sums[g][i]);
    return b;
}

EmitFormat emit_format_from_string(std::string_view s) {
    if (s == "csv") return EmitFormat::csv;
    if (s == "markdown" || s == "md") return EmitFormat::markdown;
    if (s == "plotdata-json" || s == "json") return EmitFormat::plotdata_json;
    throw ParseError("unknown format \"" + std::string(s) + "\"");
}

std::string_view extension(EmitFormat f) {
    switch (f) {
        case EmitFormat::csv: return ".csv";
        case EmitFormat::markdown: return ".md";
        case EmitFormat::plotdata_json: return ".json";
    }
    return "";
}

namespace {

std::string join_row(const std::vector<std::string>& cells, EmitFormat f) {
    std::string out;
    if (f == EmitFormat::markdown) {
        out = "|";
        for (const auto& c : cells) out += " " + c + " |";
    } else {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            const bool quote = cells[i].find_first_of(",\"\n") != std::string::npos;
            if (!quote) {
                out += cells[i];
                continue;
            }
            out += '"';
            for (char c : cells[i]) {
                if (c == '"') out += '"';
                out += c;
            }
            out += '"';
        }
    }
    return out + "\n";
}

std::string table_text(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows,
                       EmitFormat f) {
    std::string out = join_row(header, f);
    if (f == EmitFormat::markdown) {
        std::vector<std::string> sep(header.size(), "---");
        out += join_row(sep, f);
    }
    for (const auto& r : rows) out += join_row(r, f);
    return out;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string render(const MetricTable& t, EmitFormat f) {
    if (f == EmitFormat::plotdata_json) {
        json series = json::array();
        for (auto m : kAllMetrics) {
            json pts = json::array();
            for (const auto& row : t.rows) {
                const auto& c = row.cells[static_cast<std::size_t>(m)];
                pts.push_back({{"group", row.group}, {"mean", c.mean ? json(*c.mean) : json(nullptr)}, {"count", c.count}});
            }
            series.push_back({{"metric", std::string(to_string(m))}, {"points", std::move(pts)}});
        }
        return dump({{"kind", "metric_table"}, {"series", std::move(series)}});
    }
    std::vector<std::string> header{"system"};
    for (auto m : kAllMetrics) header.emplace_back(to_string(m));
    for (auto m : kAllMetrics) header.push_back("n_" + std::string(to_string(m)));
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : t.rows) {
        std::vector<std::string> r{row.group};
        for (const auto& c : row.cells) r.push_back(fmt(c.mean));
        for (const auto& c : row.cells) r.push_back(std::to_string(c.count));
        rows.push_back(std::move(r));
    }
    return table_text(header, rows, f);
}

std::string render(const LabelDistribution& d, EmitFormat f) {
    if (f == EmitFormat::plotdata_json) {
        json series = json::array();
        for (const auto& row : d.rows) {
            json props = json::object();
            for (const auto& l : d.labels)
                props[l] = row.empty() ? json(nullptr) : json(row.proportions.at(l));
            series.push_back({{"group", row.group}, {"total", row.total}, {"empty", row.empty()}, {"proportions", props}});
        }
        return dump({{"kind", "label_distribution"}, {"labels", d.labels}, {"series", std::move(series)}});
    }
    std::vector<std::string> header{"system"};
    for (const auto& l : d.labels) header.push_back(l);
    header.emplace_back("total");
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : d.rows) {
        std::vector<std::string> r{row.group};
        for (const auto& l : d.labels) r.push_back(row.empty() ? std::string() : fmt(row.proportions.at(l)));
        r.push_back(std::to_string(row.total));
        rows.push_back(std::move(r));
    }
    return table_text(header, rows, f);
}

std::string render(const TurnBreakdown& b, EmitFormat f) {
    if (f == EmitFormat::plotdata_json) {
        json series = json::array();
        for (auto m : kAllMetrics) {
            json groups = json::array();
            for (const auto& [g, cells] : b.groups) {
                json pts = json::array();
                for (std::size_t i = 0; i < cells.size(); ++i) {
                    const auto& c = cells[i][static_cast<std::size_t>(m)];
                    pts.push_back({{"pair_index", i}, {"mean", c.mean ? json(*c.mean) : json(nullptr)}, {"count", c.count}});
                }
                groups.push_back({{"group", g}, {"points", std::move(pts)}});
            }
            series.push_back({{"metric", std::string(to_string(m))}, {"groups", std::move(groups)}});
        }
        return dump({{"kind", "per_turn_breakdown"}, {"max_pair_index", b.max_pair_index}, {"series", std::move(series)}});
    }
    std::vector<std::string> header{"system", "pair_index"};
    for (auto m : kAllMetrics) header.emplace_back(to_string(m));
    for (auto m : kAllMetrics) header.push_back("n_" + std::string(to_string(m)));
    std::vector<std::vector<std::string>> rows;
    for (const auto& [g, cells] : b.groups) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            std::vector<std::string> r{g, std::to_string(i)};
            for (const auto& c : cells[i]) r.push_back(fmt(c.mean));
            for (const auto& c : cells[i]) r.push_back(std::to_string(c.count));
            rows.push_back(std::move(r));
        }
    }
    return table_text(header, rows, f);
}

void write_text(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << bytes;
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace simeval
