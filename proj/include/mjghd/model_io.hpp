#pragma once

// JSON model documents. Matrices are stored row-major as
// {"rows": r, "cols": c, "data": [...]}, vectors as plain arrays.

#include <Eigen/Dense>
#include <fstream>
#include <string>

#include "json.hpp"
#include "mjghd/errors.hpp"
#include "mjghd/model.hpp"
#include "mjghd/version.hpp"

namespace mjghd::io {

using json = nlohmann::json;

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json data = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw ParseError("matrix: data length does not match rows x cols");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data.at(static_cast<std::size_t>(r * cols + c)).get<double>();
    return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline json component_to_json(const JghdParams& c) {
    return {{"p", c.dim()},
            {"q", c.q()},
            {"gamma", matrix_to_json(c.gamma)},
            {"mu", vector_to_json(c.mu)},
            {"beta", vector_to_json(c.beta)},
            {"phi", vector_to_json(c.phi)},
            {"b", c.b},
            {"omega", vector_to_json(c.omega)},
            {"lambda", vector_to_json(c.lambda)},
            {"omega0", c.omega0},
            {"lambda0", c.lambda0}};
}

inline JghdParams component_from_json(const json& j) {
    JghdParams c;
    c.gamma = matrix_from_json(j.at("gamma"));
    c.mu = vector_from_json(j.at("mu"));
    c.beta = vector_from_json(j.at("beta"));
    c.phi = vector_from_json(j.at("phi"));
    c.b = j.at("b").get<double>();
    c.omega = vector_from_json(j.at("omega"));
    c.lambda = vector_from_json(j.at("lambda"));
    c.omega0 = j.at("omega0").get<double>();
    c.lambda0 = j.at("lambda0").get<double>();
    if (j.at("q").get<Eigen::Index>() != c.q() || j.at("p").get<Eigen::Index>() != c.dim()) {
        throw ParseError("component: p/q fields disagree with parameter lengths");
    }
    return c;
}

inline json model_to_json(const MjghdModel& model) {
    json comps = json::array();
    for (const auto& c : model.components) comps.push_back(component_to_json(c));
    return {{"format_version", kModelFormatVersion},
            {"G", model.num_components()},
            {"p", model.dim()},
            {"weights", vector_to_json(model.weights)},
            {"components", comps}};
}

inline MjghdModel model_from_json(const json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kModelFormatVersion) {
            throw ParseError("model document: unsupported format_version " + std::to_string(version));
        }
        MjghdModel model;
        model.weights = vector_from_json(j.at("weights"));
        for (const auto& c : j.at("components")) model.components.push_back(component_from_json(c));
        model.validate();
        return model;
    } catch (const json::exception& e) {
        throw ParseError(std::string("model document: ") + e.what());
    } catch (const ParameterError& e) {
        throw ParseError(std::string("model document: ") + e.what());
    }
}

/// Accepts either a bare model document or one nested under "model".
inline MjghdModel read_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model document " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError("model document " + path + ": " + e.what());
    }
    return model_from_json(doc.contains("model") ? doc.at("model") : doc);
}

inline void write_json_file(const std::string& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace mjghd::io
