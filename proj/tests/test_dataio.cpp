#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "fixtures.hpp"
#include "mjghd/dataio.hpp"

using namespace mjghd;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("mjghd_dataio_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] std::string write(const std::string& name, const std::string& content) const {
        const auto p = path_ / name;
        std::ofstream(p) << content;
        return p.string();
    }
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string data_file(const std::string& name) { return std::string(MJGHD_SOURCE_DIR) + "/data/" + name; }

std::map<std::string, int> class_sizes(const std::vector<std::string>& labels) {
    std::map<std::string, int> m;
    for (const auto& l : labels) ++m[l];
    return m;
}

}  // namespace

TEST(LoadDelimited, PlainNumericNoHeader) {
    TempDir dir;
    const auto path = dir.write("m.csv", "1.5,2\n-3,4e-2\n");
    dataio::LoadOptions opt;
    opt.header = false;
    const auto ds = dataio::load_delimited(path, opt);
    ASSERT_EQ(ds.n(), 2);
    ASSERT_EQ(ds.p(), 2);
    EXPECT_EQ(ds.matrix(0, 0), 1.5);
    EXPECT_EQ(ds.matrix(0, 1), 2.0);
    EXPECT_EQ(ds.matrix(1, 0), -3.0);
    EXPECT_EQ(ds.matrix(1, 1), 4e-2);
    EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"x1", "x2"}));
    EXPECT_FALSE(ds.labels.has_value());
}

TEST(LoadDelimited, HeaderLabelsDelimiterAndComments) {
    TempDir dir;
    const auto path = dir.write("t.tsv", "# comment\na\tkind\tb\n1\tx\t2\n\n3\ty\t4\n");
    dataio::LoadOptions opt;
    opt.delimiter = '\t';
    opt.label_column = "kind";
    const auto ds = dataio::load_delimited(path, opt);
    EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
    ASSERT_TRUE(ds.labels.has_value());
    EXPECT_EQ(*ds.labels, (std::vector<std::string>{"x", "y"}));
    EXPECT_EQ(ds.matrix(1, 1), 4.0);
    opt.label_column = "2";  // 1-based index
    EXPECT_EQ(*dataio::load_delimited(path, opt).labels, (std::vector<std::string>{"x", "y"}));
}

TEST(LoadDelimited, ErrorsCarryLocation) {
    TempDir dir;
    const auto bad = dir.write("bad.csv", "a,b\n1,2\n3,oops\n");
    try {
        dataio::load_delimited(bad);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find(":3:"), std::string::npos) << msg;
        EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
    }
    EXPECT_THROW(dataio::load_delimited(dir.write("ragged.csv", "a,b\n1,2,3\n")), ParseError);
    EXPECT_THROW(dataio::load_delimited(dir.write("nolabel.csv", "a,b\n1,2\n"), {',', true, "zzz", false}), ParseError);
    EXPECT_THROW(dataio::load_delimited((dir.path() / "missing.csv").string()), IoError);
}

TEST(LoadDelimited, MissingValuesRejectedOrSkippedWithCount) {
    TempDir dir;
    const auto path = dir.write("na.csv", "a,b\n1,2\nNA,3\n4,\n5,6\n");
    EXPECT_THROW(dataio::load_delimited(path), ParseError);
    dataio::LoadOptions opt;
    opt.skip_missing = true;
    const auto ds = dataio::load_delimited(path, opt);
    EXPECT_EQ(ds.n(), 2);
    EXPECT_NE(ds.provenance.find("dropped 2"), std::string::npos) << ds.provenance;
}

TEST(LoadDelimited, WineBenchmark) {
    dataio::LoadOptions opt;
    opt.label_column = "type";
    const auto ds = dataio::load_delimited(data_file("wine.csv"), opt);
    EXPECT_EQ(ds.n(), 178);
    EXPECT_EQ(ds.p(), 13);  // UCI variable set; see README for the substitution
    ASSERT_TRUE(ds.labels.has_value());
    const auto sizes = class_sizes(*ds.labels);
    EXPECT_EQ(sizes.size(), 3u);
    EXPECT_EQ(sizes.at("Barolo"), 59);
    EXPECT_EQ(sizes.at("Grignolino"), 71);
    EXPECT_EQ(sizes.at("Barbera"), 48);
}

TEST(LoadDelimited, TumourBenchmark) {
    dataio::LoadOptions opt;
    opt.label_column = "diagnosis";
    const auto ds = dataio::load_delimited(data_file("wdbc.csv"), opt);
    EXPECT_EQ(ds.n(), 569);
    EXPECT_EQ(ds.p(), 30);
    const auto sizes = class_sizes(*ds.labels);
    EXPECT_EQ(sizes.at("B"), 357);
    EXPECT_EQ(sizes.at("M"), 212);
}

TEST(Standardize, TwoPointColumn) {
    dataio::Dataset ds;
    ds.matrix.resize(2, 1);
    ds.matrix << 0.0, 2.0;
    ds.feature_names = {"v"};
    const auto out = dataio::standardize(ds);
    EXPECT_NEAR(out.matrix(0, 0), -std::sqrt(0.5), 1e-15);
    EXPECT_NEAR(out.matrix(1, 0), std::sqrt(0.5), 1e-15);
    EXPECT_EQ(out.center[0], 1.0);
    EXPECT_NEAR(out.scale[0], std::sqrt(2.0), 1e-15);
}

TEST(Standardize, IdempotentAndUnitVariance) {
    dataio::LoadOptions opt;
    opt.label_column = "type";
    const auto ds = dataio::standardize(dataio::load_delimited(data_file("wine.csv"), opt));
    const auto alcohol = ds.matrix.col(0);
    EXPECT_NEAR(alcohol.mean(), 0.0, 1e-12);
    EXPECT_NEAR((alcohol.array() - alcohol.mean()).square().sum() / 177.0, 1.0, 1e-12);
    const auto twice = dataio::standardize(ds);
    EXPECT_LT((twice.matrix - ds.matrix).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Standardize, ZeroVarianceColumnIsNamed) {
    dataio::Dataset ds;
    ds.matrix.resize(3, 2);
    ds.matrix << 1, 5, 2, 5, 3, 5;
    ds.feature_names = {"good", "flat"};
    try {
        dataio::standardize(ds);
        FAIL() << "expected ParameterError";
    } catch (const ParameterError& e) {
        EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
    }
}

TEST(ResolveDataPath, EnvironmentOverride) {
    TempDir dir;
    (void)dir.write("only_here.csv", "a\n1\n");
    ::setenv("MJGHD_DATA_DIR", dir.path().c_str(), 1);
    EXPECT_EQ(dataio::resolve_data_path("only_here.csv", "/nonexistent"), (dir.path() / "only_here.csv").string());
    ::unsetenv("MJGHD_DATA_DIR");
    EXPECT_EQ(dataio::resolve_data_path("only_here.csv", "/fallback"), "/fallback/only_here.csv");
}

TEST(ExportProjection, IdentityRotationReturnsData) {
    MjghdModel m;
    m.weights = Eigen::VectorXd::Ones(1);
    JghdParams c = fixture::example_params(3, 1, 2);
    c.gamma = Eigen::MatrixXd::Identity(3, 3);
    m.components = {c};
    dataio::Dataset ds;
    ds.matrix = Eigen::MatrixXd::Random(6, 3);
    ds.labels = std::vector<std::string>{"a", "a", "b", "b", "c", "c"};
    const auto table = dataio::export_projection(m, std::vector<int>(6, 0), ds, 0, 3);
    EXPECT_EQ(table.coordinates, ds.matrix);
    EXPECT_EQ(table.hard_labels, std::vector<int>(6, 1));
}

TEST(ExportProjection, IsometryAndErrors) {
    MjghdModel m;
    m.weights = Eigen::Vector2d(0.5, 0.5);
    m.components = {fixture::example_params(4, 2, 3), fixture::example_params(4, 1, 4)};
    dataio::Dataset ds;
    ds.matrix = Eigen::MatrixXd::Random(10, 4);
    const std::vector<int> hard(10, 1);
    const auto full = dataio::export_projection(m, hard, ds, 1, 4);
    for (Eigen::Index i = 0; i < 10; ++i) {
        EXPECT_NEAR(full.coordinates.row(i).norm(), ds.matrix.row(i).norm(), 1e-10);
    }
    EXPECT_THROW(dataio::export_projection(m, hard, ds, 2, 1), ParameterError);
    EXPECT_THROW(dataio::export_projection(m, hard, ds, -1, 1), ParameterError);
    EXPECT_THROW(dataio::export_projection(m, hard, ds, 0, 5), ParameterError);
    EXPECT_THROW(dataio::export_projection(m, std::vector<int>(3, 0), ds, 0, 2), ParameterError);
}

TEST(ExportProjection, WrittenTableRoundTripsBitExactly) {
    MjghdModel m;
    m.weights = Eigen::VectorXd::Ones(1);
    JghdParams c = fixture::example_params(3, 2, 9);
    c.gamma = Eigen::MatrixXd::Identity(3, 3);
    m.components = {c};
    TempDir dir;
    const auto src = dir.write("raw.csv", "u,v,w,cls\n0.1,1e-300,-7.25,k\n3.141592653589793,2.718281828459045,1,j\n");
    dataio::LoadOptions opt;
    opt.label_column = "cls";
    const auto ds = dataio::load_delimited(src, opt);
    std::ostringstream out;
    dataio::write_projection(out, dataio::export_projection(m, {0, 0}, ds, 0, 3));
    const auto back_path = dir.write("proj.csv", out.str());
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "dim1,dim2,dim3,hard_label,true_label");
    dataio::LoadOptions back_opt;
    back_opt.label_column = "true_label";
    const auto back = dataio::load_delimited(back_path, back_opt);
    EXPECT_EQ(Eigen::MatrixXd(back.matrix.leftCols(3)), ds.matrix);
    EXPECT_EQ(*back.labels, *ds.labels);
}
