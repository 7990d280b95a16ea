#pragma once

// Delimited-text ingestion, standardization and projection export.

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mjghd/errors.hpp"
#include "mjghd/jghd.hpp"
#include "mjghd/model.hpp"

namespace mjghd::dataio {

struct Dataset {
    Eigen::MatrixXd matrix;
    std::vector<std::string> feature_names;
    std::optional<std::vector<std::string>> labels;
    std::string provenance;
    // Filled by standardize(); empty when the data are untransformed.
    Eigen::VectorXd center;
    Eigen::VectorXd scale;

    [[nodiscard]] Eigen::Index n() const { return matrix.rows(); }
    [[nodiscard]] Eigen::Index p() const { return matrix.cols(); }
};

struct LoadOptions {
    char delimiter = ',';
    bool header = true;
    std::string label_column;  // name (with header) or 1-based index; empty for none
    bool skip_missing = false; // drop rows with empty or NA cells instead of failing
};

namespace detail {

inline std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (ch == '"') {
            if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
                cell.push_back('"');
                ++i;
            } else {
                quoted = !quoted;
            }
        } else if (ch == delim && !quoted) {
            out.push_back(cell);
            cell.clear();
        } else {
            cell.push_back(ch);
        }
    }
    out.push_back(cell);
    for (auto& c : out) {
        const auto first = c.find_first_not_of(" \t\r");
        const auto last = c.find_last_not_of(" \t\r");
        c = first == std::string::npos ? std::string() : c.substr(first, last - first + 1);
    }
    return out;
}

inline bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA" || cell == "NaN" || cell == "?"; }

inline bool parse_double(const std::string& cell, double& value) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    if (!cell.empty() && *begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    return ec == std::errc() && ptr == end && std::isfinite(value);
}

}  // namespace detail

/// Reads a delimited file. Lines starting with '#' and blank lines are
/// skipped. Without a header, features are named x1..xp.
inline Dataset load_delimited(const std::string& path, const LoadOptions& options = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (options.header && header.empty()) {
            header = detail::split(line, options.delimiter);
            continue;
        }
        rows.push_back(detail::split(line, options.delimiter));
        line_numbers.push_back(line_no);
    }
    if (in.bad()) throw IoError("read failed for " + path);

    const std::size_t width = options.header ? header.size() : (rows.empty() ? 0 : rows.front().size());
    if (width == 0) throw ParseError(path + ": no columns");

    std::optional<std::size_t> label_col;
    if (!options.label_column.empty()) {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == options.label_column) label_col = k;
        if (!label_col) {
            std::size_t idx = 0;
            const auto [ptr, ec] = std::from_chars(options.label_column.data(),
                                                   options.label_column.data() + options.label_column.size(), idx);
            if (ec != std::errc() || ptr != options.label_column.data() + options.label_column.size() || idx < 1 ||
                idx > width) {
                throw ParseError(path + ": label column '" + options.label_column + "' not found");
            }
            label_col = idx - 1;
        }
    }

    Dataset ds;
    for (std::size_t k = 0; k < width; ++k) {
        if (label_col && k == *label_col) continue;
        ds.feature_names.push_back(options.header ? header[k] : "x" + std::to_string(k + 1));
    }
    const auto p = static_cast<Eigen::Index>(ds.feature_names.size());
    if (p == 0) throw ParseError(path + ": no numeric columns");

    std::vector<double> values;
    std::vector<std::string> labels;
    std::size_t dropped = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        if (cells.size() != width) {
            std::ostringstream msg;
            msg << path << ":" << line_numbers[r] << ": expected " << width << " fields, found " << cells.size();
            throw ParseError(msg.str());
        }
        std::vector<double> parsed;
        parsed.reserve(static_cast<std::size_t>(p));
        bool missing = false;
        for (std::size_t k = 0; k < width; ++k) {
            if (label_col && k == *label_col) continue;
            if (detail::is_missing(cells[k])) {
                missing = true;
                break;
            }
            double v = 0.0;
            if (!detail::parse_double(cells[k], v)) {
                std::ostringstream msg;
                msg << path << ":" << line_numbers[r] << ": column " << (k + 1) << ": non-numeric cell '" << cells[k]
                    << "'";
                throw ParseError(msg.str());
            }
            parsed.push_back(v);
        }
        if (missing) {
            if (!options.skip_missing) {
                std::ostringstream msg;
                msg << path << ":" << line_numbers[r] << ": missing value";
                throw ParseError(msg.str());
            }
            ++dropped;
            continue;
        }
        values.insert(values.end(), parsed.begin(), parsed.end());
        if (label_col) labels.push_back(cells[*label_col]);
    }
    const auto n = static_cast<Eigen::Index>(values.size() / static_cast<std::size_t>(p));
    if (n == 0) throw ParseError(path + ": no data rows");
    ds.matrix = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(),
                                                                                                          n, p);
    if (label_col) ds.labels = std::move(labels);
    std::ostringstream prov;
    prov << path << " (n=" << n << ", p=" << p;
    if (dropped > 0) prov << ", dropped " << dropped << " rows with missing values";
    prov << ")";
    ds.provenance = prov.str();
    return ds;
}

/// Centers each column and scales it to unit sample variance (divisor n - 1).
inline Dataset standardize(const Dataset& data) {
    if (data.n() < 2) throw ParameterError("standardize: need at least two rows");
    Dataset out = data;
    out.center = data.matrix.colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.matrix.rowwise() - out.center.transpose();
    out.scale = (centered.array().square().colwise().sum() / static_cast<double>(data.n() - 1)).sqrt().transpose();
    for (Eigen::Index k = 0; k < data.p(); ++k) {
        if (!(out.scale[k] > 0.0)) {
            const std::string name = k < static_cast<Eigen::Index>(data.feature_names.size())
                                         ? data.feature_names[static_cast<std::size_t>(k)]
                                         : std::to_string(k + 1);
            throw ParameterError("standardize: column '" + name + "' has zero variance");
        }
    }
    out.matrix = centered.array().rowwise() / out.scale.transpose().array();
    out.provenance = data.provenance + " standardized (sample sd)";
    return out;
}

/// Resolves a dataset name against MJGHD_DATA_DIR, then the given default.
inline std::string resolve_data_path(const std::string& name, const std::string& fallback_dir) {
    if (std::filesystem::exists(name)) return name;
    if (const char* env = std::getenv("MJGHD_DATA_DIR"); env != nullptr && *env != '\0') {
        const auto candidate = std::filesystem::path(env) / name;
        if (std::filesystem::exists(candidate)) return candidate.string();
    }
    return (std::filesystem::path(fallback_dir) / name).string();
}

struct ProjectionTable {
    Eigen::MatrixXd coordinates;  // n x dims
    std::vector<int> hard_labels;  // 1-based component
    std::optional<std::vector<std::string>> true_labels;
};

/// First `dims` rotated coordinates Gamma_g^T x of every observation under
/// component `component` (0-based).
inline ProjectionTable export_projection(const MjghdModel& model, const std::vector<int>& hard_labels,
                                         const Dataset& data, Eigen::Index component, Eigen::Index dims) {
    if (component < 0 || component >= model.num_components()) {
        throw ParameterError("export_projection: component index out of range");
    }
    const auto& comp = model.components[static_cast<std::size_t>(component)];
    if (dims < 1 || dims > comp.dim()) throw ParameterError("export_projection: dims must be in 1..p");
    if (data.p() != comp.dim()) throw ParameterError("export_projection: data dimension does not match the model");
    if (static_cast<Eigen::Index>(hard_labels.size()) != data.n()) {
        throw ParameterError("export_projection: one hard label per row required");
    }
    ProjectionTable out;
    out.coordinates = data.matrix * comp.gamma.leftCols(dims);
    out.hard_labels.reserve(hard_labels.size());
    for (int l : hard_labels) out.hard_labels.push_back(l + 1);
    out.true_labels = data.labels;
    return out;
}

inline std::string format_double(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

inline void write_projection(std::ostream& out, const ProjectionTable& table) {
    const auto dims = table.coordinates.cols();
    for (Eigen::Index k = 0; k < dims; ++k) out << "dim" << (k + 1) << ',';
    out << "hard_label";
    if (table.true_labels) out << ",true_label";
    out << '\n';
    for (Eigen::Index i = 0; i < table.coordinates.rows(); ++i) {
        for (Eigen::Index k = 0; k < dims; ++k) out << format_double(table.coordinates(i, k)) << ',';
        out << table.hard_labels[static_cast<std::size_t>(i)];
        if (table.true_labels) out << ',' << (*table.true_labels)[static_cast<std::size_t>(i)];
        out << '\n';
    }
}

}  // namespace mjghd::dataio
