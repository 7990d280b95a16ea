#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mjghd/dataio.hpp"
#include "mjghd/ecm.hpp"
#include "mjghd/errors.hpp"
#include "mjghd/metrics.hpp"
#include "mjghd/model_io.hpp"
#include "mjghd/select.hpp"
#include "mjghd/version.hpp"

#ifndef MJGHD_DEFAULT_DATA_DIR
#define MJGHD_DEFAULT_DATA_DIR "data"
#endif

namespace mjghd::cli {

using io::json;

enum ExitCode : int { kSuccess = 0, kUsage = 2, kNumerical = 3, kIo = 4 };

struct DataArgs {
    std::string path;
    std::string labels;
    std::string delimiter = ",";
    bool no_header = false;
    bool skip_missing = false;
    bool standardize = false;
};

struct FitArgs {
    int starts = 10;
    std::uint64_t seed = 1;
    int max_iterations = 500;
    double tol = 1e-8;
    int newton_steps = 3;
    double param_floor = 1e-6;
    int workers = 1;
};

struct RunConfig {
    std::string command;
    DataArgs data;
    FitArgs fit;
    int n_components = 0;
    std::vector<int> q;
    std::vector<int> g_grid;
    std::vector<int> q_grid;
    int max_configs = 200;
    bool common_q = false;
    std::string model_path;
    long n_rows = 0;
    int component = 1;
    int dims = 3;
    std::string out = "-";
    std::string model_out;
};

namespace detail {

inline char parse_delimiter(const std::string& s) {
    if (s == "tab" || s == "\\t" || s == "\t") return '\t';
    if (s.size() != 1) throw ParameterError("--delimiter must be a single character or 'tab'");
    return s[0];
}

inline void add_data_options(CLI::App& app, DataArgs& d, bool required) {
    auto* opt = app.add_option("--data", d.path, "Delimited data file (resolved against MJGHD_DATA_DIR)");
    if (required) opt->required();
    app.add_option("--labels", d.labels, "Label column name or 1-based index, excluded from the features");
    app.add_option("--delimiter", d.delimiter, "Field delimiter (single character or 'tab')")->capture_default_str();
    app.add_flag("--no-header", d.no_header, "First row is data, not column names");
    app.add_flag("--skip-missing", d.skip_missing, "Drop rows with missing cells instead of failing");
    app.add_flag("--standardize", d.standardize, "Center and scale every column to unit variance");
}

inline void add_fit_options(CLI::App& app, FitArgs& f) {
    app.add_option("--starts", f.starts, "Random starts")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--seed", f.seed, "Master seed")->capture_default_str();
    app.add_option("--max-iter", f.max_iterations, "ECM iterations per start")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--tol", f.tol, "Relative log-likelihood tolerance")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--newton-steps", f.newton_steps, "Newton steps for Omega per iteration")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--param-floor", f.param_floor, "Lower clamp for scale and concentration parameters")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--workers", f.workers, "Concurrent starts; output does not depend on it")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

inline FitConfig to_fit_config(const FitArgs& f) {
    FitConfig c;
    c.n_starts = f.starts;
    c.seed = f.seed;
    c.max_iterations = f.max_iterations;
    c.loglik_rel_tol = f.tol;
    c.newton_max_steps = f.newton_steps;
    c.param_floor = f.param_floor;
    c.workers = f.workers;
    c.validate();
    return c;
}

inline json data_config_json(const DataArgs& d) {
    return {{"data", d.path},         {"labels", d.labels},           {"delimiter", d.delimiter},
            {"header", !d.no_header}, {"skip_missing", d.skip_missing}, {"standardize", d.standardize}};
}

inline json fit_config_json(const FitArgs& f) {
    return {{"starts", f.starts},
            {"seed", f.seed},
            {"max_iterations", f.max_iterations},
            {"tol", f.tol},
            {"newton_steps", f.newton_steps},
            {"param_floor", f.param_floor}};
}

inline json header_json(const RunConfig& rc) {
    return {{"tool", "mjghd"}, {"version", kVersion}, {"command", rc.command}};
}

/// Everything that determines the output; worker count is recorded
/// separately because results do not depend on it.
inline json effective_config(const RunConfig& rc) {
    json c;
    if (rc.command == "fit" || rc.command == "select" || rc.command == "project") {
        c.update(data_config_json(rc.data));
    }
    if (rc.command == "fit" || rc.command == "select") c.update(fit_config_json(rc.fit));
    if (rc.command == "fit") {
        c["G"] = rc.n_components;
        c["q"] = rc.q;
    }
    if (rc.command == "select") {
        c["G_grid"] = rc.g_grid;
        c["q_grid"] = rc.q_grid;
        c["max_configs"] = rc.max_configs;
        c["common_q"] = rc.common_q;
    }
    if (rc.command == "generate" || rc.command == "project") c["model"] = rc.model_path;
    if (rc.command == "generate") {
        c["n"] = rc.n_rows;
        c["seed"] = rc.fit.seed;
    }
    if (rc.command == "project") {
        c["component"] = rc.component;
        c["dims"] = rc.dims;
    }
    return c;
}

inline json document_prefix(const RunConfig& rc) {
    json doc = header_json(rc);
    doc["config"] = effective_config(rc);
    if (rc.command == "fit" || rc.command == "select") doc["execution"] = {{"workers", rc.fit.workers}};
    return doc;
}

inline dataio::Dataset load_data(const DataArgs& d) {
    dataio::LoadOptions opt;
    opt.delimiter = parse_delimiter(d.delimiter);
    opt.header = !d.no_header;
    opt.label_column = d.labels;
    opt.skip_missing = d.skip_missing;
    const std::string path = dataio::resolve_data_path(d.path, MJGHD_DEFAULT_DATA_DIR);
    dataio::Dataset ds = dataio::load_delimited(path, opt);
    return d.standardize ? dataio::standardize(ds) : ds;
}

inline json dataset_json(const dataio::Dataset& ds) {
    json j{{"n", ds.n()}, {"p", ds.p()}, {"features", ds.feature_names}, {"provenance", ds.provenance}};
    if (ds.center.size() > 0) {
        j["center"] = io::vector_to_json(ds.center);
        j["scale"] = io::vector_to_json(ds.scale);
    }
    return j;
}

inline std::vector<int> one_based(const std::vector<int>& labels) {
    std::vector<int> out(labels);
    for (int& l : out) ++l;
    return out;
}

/// ARI, misclassification count and cross-tabulation against true labels.
inline json evaluation_json(const std::vector<std::string>& truth, const std::vector<int>& hard) {
    const auto tab = metrics::cross_tabulate(truth, one_based(hard));
    json counts = json::array();
    for (Eigen::Index i = 0; i < tab.counts.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < tab.counts.cols(); ++j) row.push_back(tab.counts(i, j));
        counts.push_back(row);
    }
    return {{"ari", metrics::adjusted_rand_index(tab.counts)},
            {"misclassified", metrics::misclassified(tab.counts)},
            {"crosstab", {{"rows", tab.row_labels}, {"cols", tab.col_labels}, {"counts", counts}}}};
}

inline json diagnostics_json(const FitDiagnostics& d) {
    return {{"worst_loglik_drop", d.worst_loglik_drop},
            {"worst_row_sum_error", d.worst_row_sum_error},
            {"worst_orthogonality", d.worst_orthogonality},
            {"degenerate_denominators", d.flags.degenerate_denominators},
            {"lambda_skips", d.flags.lambda_skips},
            {"omega_rejections", d.flags.omega_rejections},
            {"svd_failures", d.flags.svd_failures},
            {"reorthonormalizations", d.flags.reorthonormalizations},
            {"orientation_rejections", d.flags.orientation_rejections},
            {"inverse_clamps", d.inverse_clamps},
            {"argument_clamps", d.argument_clamps}};
}

inline json fit_json(const FitResult& r, long n_params, double bic) {
    json starts = json::array();
    for (const auto& s : r.starts) {
        json rec{{"start", s.start}, {"succeeded", s.succeeded}, {"iterations", s.iterations}};
        rec["final_loglik"] = s.succeeded ? json(s.final_loglik) : json(nullptr);
        if (!s.succeeded) rec["failure"] = s.failure;
        starts.push_back(rec);
    }
    return {{"loglik", r.loglik()},
            {"n_params", n_params},
            {"bic", bic},
            {"converged", r.converged},
            {"iterations", r.n_iterations},
            {"best_start", r.best_start},
            {"loglik_trace", r.loglik_trace},
            {"starts", starts},
            {"diagnostics", diagnostics_json(r.diagnostics)}};
}

/// Writes to a file, or to `out` when the path is "-".
inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << text;
    if (!f) throw IoError("write failed for " + path);
}

/// Comment block for delimited outputs; the loader skips '#' lines.
inline std::string comment_header(const RunConfig& rc) {
    std::ostringstream s;
    s << "# mjghd " << kVersion << ' ' << rc.command << '\n';
    s << "# config " << effective_config(rc).dump() << '\n';
    return s.str();
}

inline void write_model_document(const RunConfig& rc, const MjghdModel& model, std::ostream& out) {
    if (rc.model_out.empty()) return;
    json doc = document_prefix(rc);
    doc["model"] = io::model_to_json(model);
    emit(rc.model_out, doc.dump(2) + "\n", out);
}

inline int cmd_fit(const RunConfig& rc, std::ostream& out) {
    if (rc.n_components < 1) throw ParameterError("--G must be >= 1");
    if (static_cast<int>(rc.q.size()) != rc.n_components) {
        throw ParameterError("--q needs one value per component (" + std::to_string(rc.n_components) + ")");
    }
    const FitConfig config = to_fit_config(rc.fit);
    const dataio::Dataset ds = load_data(rc.data);
    validate_subspace_dims(rc.q, ds.p());
    const FitResult r = fit(ds.matrix, rc.n_components, rc.q, config);
    const long n_params = select::count_parameters(rc.n_components, static_cast<int>(ds.p()), rc.q);
    json doc = document_prefix(rc);
    doc["dataset"] = dataset_json(ds);
    doc["fit"] = fit_json(r, n_params, select::bic_score(r.loglik(), n_params, static_cast<long>(ds.n())));
    doc["hard_labels"] = one_based(r.hard_labels);
    if (ds.labels) doc["evaluation"] = evaluation_json(*ds.labels, r.hard_labels);
    doc["model"] = io::model_to_json(r.model);
    emit(rc.out, doc.dump(2) + "\n", out);
    write_model_document(rc, r.model, out);
    return kSuccess;
}

inline int cmd_select(const RunConfig& rc, std::ostream& out) {
    const FitConfig config = to_fit_config(rc.fit);
    const dataio::Dataset ds = load_data(rc.data);
    const select::ModelGrid grid{rc.g_grid, rc.q_grid, rc.max_configs,
                                 rc.common_q ? select::SearchMode::CommonQ : select::SearchMode::ExhaustiveTuples};
    grid.validate(ds.p());
    const select::GridResult result = select::grid_search(ds.matrix, grid, config);
    json ranked = json::array();
    for (std::size_t k = 0; k < result.ranked.size(); ++k) {
        const auto& s = result.ranked[k];
        json row{{"rank", k + 1},
                 {"G", s.config.n_components},
                 {"q", s.config.q},
                 {"loglik", s.fit.loglik()},
                 {"n_params", s.n_params},
                 {"bic", s.bic},
                 {"converged", s.fit.converged},
                 {"iterations", s.fit.n_iterations},
                 {"best", k == 0}};
        if (ds.labels) row["ari"] = metrics::adjusted_rand_index(*ds.labels, s.fit.hard_labels);
        ranked.push_back(row);
    }
    json failures = json::array();
    for (const auto& f : result.failures) {
        failures.push_back({{"G", f.config.n_components}, {"q", f.config.q}, {"reason", f.reason}});
    }
    const auto& best = result.ranked.front();
    json doc = document_prefix(rc);
    doc["dataset"] = dataset_json(ds);
    doc["ranked"] = ranked;
    doc["failures"] = failures;
    doc["best"] = {{"G", best.config.n_components}, {"q", best.config.q}};
    doc["fit"] = fit_json(best.fit, best.n_params, best.bic);
    doc["hard_labels"] = one_based(best.fit.hard_labels);
    if (ds.labels) doc["evaluation"] = evaluation_json(*ds.labels, best.fit.hard_labels);
    doc["model"] = io::model_to_json(best.fit.model);
    emit(rc.out, doc.dump(2) + "\n", out);
    write_model_document(rc, best.fit.model, out);
    return kSuccess;
}

inline int cmd_generate(const RunConfig& rc, std::ostream& out) {
    if (rc.n_rows < 0) throw ParameterError("--n must be >= 0");
    const MjghdModel model = io::read_model_file(rc.model_path);
    const LabelledSample sample = mixture_sample(model, static_cast<std::size_t>(rc.n_rows), rc.fit.seed);
    std::ostringstream s;
    s << comment_header(rc);
    for (Eigen::Index k = 0; k < model.dim(); ++k) s << 'x' << (k + 1) << ',';
    s << "label\n";
    for (Eigen::Index i = 0; i < sample.data.rows(); ++i) {
        for (Eigen::Index k = 0; k < sample.data.cols(); ++k) s << dataio::format_double(sample.data(i, k)) << ',';
        s << (sample.labels[static_cast<std::size_t>(i)] + 1) << '\n';
    }
    emit(rc.out, s.str(), out);
    return kSuccess;
}

inline int cmd_project(const RunConfig& rc, std::ostream& out) {
    const MjghdModel model = io::read_model_file(rc.model_path);
    const dataio::Dataset ds = load_data(rc.data);
    if (ds.p() != model.dim()) throw ParameterError("--data dimension does not match the model");
    EStepOptions opt;
    opt.param_floor = rc.fit.param_floor;
    opt.with_log_moments = false;
    const std::vector<int> hard = argmax_rows(e_step(model, ds.matrix, opt).zhat);
    const auto table = dataio::export_projection(model, hard, ds, rc.component - 1, rc.dims);
    std::ostringstream s;
    s << comment_header(rc);
    dataio::write_projection(s, table);
    emit(rc.out, s.str(), out);
    return kSuccess;
}

inline int error_exit(const RunConfig& rc, std::ostream& err, int code, const std::string& kind,
                      const std::string& message) {
    json rec = header_json(rc);
    rec["error"] = {{"kind", kind}, {"exit_code", code}, {"message", message}};
    err << rec.dump() << '\n';
    return code;
}

}  // namespace detail

/// Parses the argument list (without the program name) and runs the
/// selected command. Never throws; returns the process exit status.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    using namespace detail;
    RunConfig rc;
    CLI::App app{"Mixtures of joint generalized hyperbolic distributions: fit, select, generate, project"};
    app.set_version_flag("--version", std::string(kVersion));
    app.set_config("--config", "", "Read options from a TOML or INI file");
    app.require_subcommand(1);

    auto* fit_cmd = app.add_subcommand("fit", "Fit one (G, q) configuration");
    add_data_options(*fit_cmd, rc.data, true);
    add_fit_options(*fit_cmd, rc.fit);
    fit_cmd->add_option("--G", rc.n_components, "Number of components")->required()->check(CLI::PositiveNumber);
    fit_cmd->add_option("--q", rc.q, "Subspace dimension per component, e.g. 8,5,3")->required()->delimiter(',');
    fit_cmd->add_option("--out", rc.out, "Report path ('-' for stdout)")->capture_default_str();
    fit_cmd->add_option("--model-out", rc.model_out, "Also write the model document here");

    auto* select_cmd = app.add_subcommand("select", "Fit a grid of configurations and rank them by BIC");
    add_data_options(*select_cmd, rc.data, true);
    add_fit_options(*select_cmd, rc.fit);
    select_cmd->add_option("--G-grid", rc.g_grid, "Component counts, e.g. 1,2,3,4")->required()->delimiter(',');
    select_cmd->add_option("--q-grid", rc.q_grid, "Subspace dimension candidates, e.g. 2,3,5,8")
        ->required()
        ->delimiter(',');
    select_cmd->add_option("--max-configs", rc.max_configs, "Cap on the number of configurations")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    select_cmd->add_flag("--common-q", rc.common_q, "Use one q for all components instead of every multiset");
    select_cmd->add_option("--out", rc.out, "Report path ('-' for stdout)")->capture_default_str();
    select_cmd->add_option("--model-out", rc.model_out, "Also write the BIC-best model document here");

    auto* gen_cmd = app.add_subcommand("generate", "Draw a labelled sample from a model document");
    gen_cmd->add_option("--model", rc.model_path, "Model document or fit report")->required();
    gen_cmd->add_option("--n", rc.n_rows, "Rows to draw")->required()->check(CLI::NonNegativeNumber);
    gen_cmd->add_option("--seed", rc.fit.seed, "Seed")->capture_default_str();
    gen_cmd->add_option("--out", rc.out, "Output path ('-' for stdout)")->capture_default_str();

    auto* proj_cmd = app.add_subcommand("project", "Export rotated coordinates of one component for plotting");
    proj_cmd->add_option("--model", rc.model_path, "Model document or fit report")->required();
    add_data_options(*proj_cmd, rc.data, true);
    proj_cmd->add_option("--component", rc.component, "Component (1-based)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    proj_cmd->add_option("--dims", rc.dims, "Leading rotated dimensions to export")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    proj_cmd->add_option("--param-floor", rc.fit.param_floor, "Lower clamp used in the E-step")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    proj_cmd->add_option("--out", rc.out, "Output path ('-' for stdout)")->capture_default_str();

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        for (const auto* sub : app.get_subcommands()) rc.command = sub->get_name();
        return error_exit(rc, err, kUsage, "usage", e.what());
    }

    for (const auto* sub : app.get_subcommands()) rc.command = sub->get_name();
    try {
        if (rc.command == "fit") return cmd_fit(rc, out);
        if (rc.command == "select") return cmd_select(rc, out);
        if (rc.command == "generate") return cmd_generate(rc, out);
        return cmd_project(rc, out);
    } catch (const ParameterError& e) {
        return error_exit(rc, err, kUsage, "usage", e.what());
    } catch (const IoError& e) {
        return error_exit(rc, err, kIo, "io", e.what());
    } catch (const ParseError& e) {
        return error_exit(rc, err, kIo, "io", e.what());
    } catch (const Error& e) {
        return error_exit(rc, err, kNumerical, "numerical", e.what());
    } catch (const std::exception& e) {
        return error_exit(rc, err, kNumerical, "numerical", e.what());
    }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace mjghd::cli
