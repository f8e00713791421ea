#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "hypox/dataset.hpp"

namespace fs = std::filesystem;
using hypox::cli::run;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hypox_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kHeader = "subject_id,hadm_id,charttime,heart_rate,resp_rate,spo2,sbp,dbp,temperature,age,gender,height,"
                      "weight,race,copd\n";

}  // namespace

TEST_CASE("score appends TAG columns and a label to every row") {
  const auto dir = scratch("score");
  write_text(dir / "in.csv", std::string(kHeader) +
                                 "1,11,2150-01-01 00:00,80,16,97,120,70,37.0,50,M,170,70,White,0\n"
                                 "1,11,2150-01-01 00:01,80,16,93,120,70,37.0,50,M,170,70,White,0\n"
                                 "1,11,2150-01-01 00:02,135,30,97,120,70,37.0,50,M,170,70,White,0\n");
  std::ostringstream out, err;
  const int code = run({"score", "--in", (dir / "in.csv").string(), "--out", (dir / "out.csv").string(), "--alarms",
                        (dir / "alarms.json").string()},
                       out, err);
  CHECK(code == 0);
  const auto table = hypox::csv::Table::read_file((dir / "out.csv").string());
  REQUIRE(table.rows() == 3);
  CHECK(table.header().size() == 15 + 7);
  CHECK(table.row(0)[table.require("severity_label")] == "0");
  CHECK(table.row(1)[table.require("severity_label")] == "2");
  CHECK(table.row(2)[table.require("TAG_heart_rate")] == "3");
  const auto alarms = nlohmann::json::parse(slurp(dir / "alarms.json"));
  CHECK(alarms["admissions"].size() == 1);
  CHECK(alarms["row_errors"].empty());
}

TEST_CASE("score records pediatric COPD rows and exits 3") {
  const auto dir = scratch("score_copd");
  write_text(dir / "in.csv", std::string(kHeader) +
                                 "1,11,2150-01-01 00:00,80,16,97,120,70,37.0,50,M,170,70,White,0\n"
                                 "2,22,2150-01-01 00:00,80,16,97,120,70,37.0,10,F,140,30,White,1\n");
  std::ostringstream out, err;
  const int code =
      run({"score", "--in", (dir / "in.csv").string(), "--out", (dir / "out.csv").string()}, out, err);
  CHECK(code == 3);
  CHECK(err.str().find("line 3") != std::string::npos);
}

TEST_CASE("schema errors and missing files exit 2") {
  const auto dir = scratch("errors");
  std::ostringstream out, err;
  CHECK(run({"score", "--in", (dir / "absent.csv").string(), "--out", (dir / "o.csv").string()}, out, err) == 2);
  write_text(dir / "bad.csv", "subject_id,hadm_id\n1,2\n");
  CHECK(run({"score", "--in", (dir / "bad.csv").string(), "--out", (dir / "o.csv").string()}, out, err) == 2);
  CHECK(run({"train", "--data-dir", (dir / "nowhere").string(), "--model", (dir / "m.json").string(), "--log",
             (dir / "l.csv").string(), "--importance", (dir / "i.json").string()},
            out, err) == 2);
  CHECK(run({"--bogus"}, out, err) == 2);
  write_text(dir / "cfg.json", R"({"seed": 1, "colour": "red"})");
  CHECK(run({"--config", (dir / "cfg.json").string(), "--dump-matrix"}, out, err) == 2);
}

TEST_CASE("dump-matrix prints JSON and exits 0") {
  std::ostringstream out, err;
  CHECK(run({"--dump-matrix"}, out, err) == 0);
  const auto j = nlohmann::json::parse(out.str());
  CHECK(j.is_object());
}

TEST_CASE("evaluate on a perfectly separable fixture reports accuracy 1") {
  const auto dir = scratch("evaluate");
  hypox::dataset::LabeledRows rows;
  std::vector<double> x(hypox::dataset::kFeatureCount, 0.0);
  for (int i = 0; i < 400; ++i) {
    const int y = i % 4;
    x[1] = y * 10.0;
    rows.x.append_row(x);
    rows.y.push_back(y);
  }
  fs::create_directories(dir / "data");
  for (const char* name : {"train.csv", "validation.csv", "test.csv"}) {
    hypox::dataset::write_gbm_csv((dir / "data" / name).string(), rows, "fixture");
  }
  std::ostringstream out, err;
  REQUIRE(run({"train", "--data-dir", (dir / "data").string(), "--model", (dir / "m.json").string(), "--log",
               (dir / "log.csv").string(), "--importance", (dir / "imp.json").string()},
              out, err) == 0);
  REQUIRE(run({"evaluate", "--model", (dir / "m.json").string(), "--data", (dir / "data" / "test.csv").string(),
               "--out", (dir / "r.json").string()},
              out, err) == 0);
  const auto r = nlohmann::json::parse(slurp(dir / "r.json"));
  CHECK(r["aggregate"]["accuracy"].get<double>() == 1.0);
  CHECK(r["provenance"]["seed"] == 42);
  const auto imp = nlohmann::json::parse(slurp(dir / "imp.json"));
  CHECK(imp["top_features"][0]["feature"] == "spo2");
}

TEST_CASE("config hash ignores paths and jobs but not settings") {
  hypox::cli::RunConfig a, b;
  b.output_dir = "elsewhere";
  b.jobs = 8;
  CHECK(a.hash() == b.hash());
  b.seed = 7;
  CHECK(a.hash() != b.hash());
  const auto c = hypox::cli::RunConfig::from_json(a.to_json());
  CHECK(c.hash() == a.hash());
  CHECK(a.provenance().rfind("hypox config_hash=", 0) == 0);
}
