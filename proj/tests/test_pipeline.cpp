#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hopfshock/error.hpp"
#include "hopfshock/pipeline.hpp"

using namespace hopfshock;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hopfshock-test-" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

ErrorKind config_error_of(const std::string& text) {
    try {
        RunConfig::from_json(text);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Io;  // no error: reported as a mismatch by the caller
}

RunConfig quick(const fs::path& dir, std::vector<std::string> stages) {
    RunConfig c;
    c.output_dir = dir.string();
    c.stages = std::move(stages);
    return c;
}

std::vector<std::vector<std::string>> rows(const std::string& csv) {
    std::vector<std::vector<std::string>> out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        out.push_back(cells);
    }
    return out;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config validation") {
    CHECK(config_error_of(R"({"grid": {"nodes": 600}})") == ErrorKind::Configuration);
    CHECK(config_error_of(R"({"exemplar": "no_such_flux"})") == ErrorKind::Configuration);
    CHECK(config_error_of(R"({"tolerances": {"series": 0}})") == ErrorKind::Configuration);
    CHECK(config_error_of(R"({"grid": {"nodse": 601}})") == ErrorKind::Configuration);
    CHECK(config_error_of(R"({"hopf": {"orbit_a": 0.07}})") == ErrorKind::Configuration);
    CHECK(config_error_of(R"({"stages": ["branch"]})") == ErrorKind::Configuration);
    CHECK(config_error_of(R"({"truncation": {"order": "cubic"}})") == ErrorKind::Configuration);
    CHECK(config_error_of("{ not json") == ErrorKind::Configuration);
    const auto c = RunConfig::from_json("// comment\n{ /* inline */ \"grid\": {\"nodes\": 401} }");
    CHECK(c.nodes == 401);
    CHECK(c.half_width == 30.0);
}

TEST_CASE("shipped default config equals the built-in defaults") {
    const auto c = RunConfig::from_file(HOPFSHOCK_SOURCE_DIR "/configs/default.jsonc");
    CHECK(c.canonical_json() == RunConfig{}.canonical_json());
    CHECK(c.output_dir == "out");
    CHECK(c.stages == pipeline_stages());
    CHECK_NOTHROW(RunConfig::from_file(HOPFSHOCK_SOURCE_DIR "/configs/fast.jsonc"));
}

TEST_CASE("config hash") {
    RunConfig a, b;
    b.output_dir = "elsewhere";
    b.threads = 4;
    b.use_cache = false;
    b.stages = {"kernels"};
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    b.kernels.t_samples = 14;
    CHECK(a.hash() != b.hash());
    const auto j = nlohmann::json::parse(a.canonical_json());
    CHECK(j.at("grid").at("nodes") == 601);
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for(static_cast<int>(ErrorKind::Configuration)) == 2);
    CHECK(exit_code_for(static_cast<int>(ErrorKind::SpectralAssumption)) == 3);
    CHECK(exit_code_for(static_cast<int>(ErrorKind::Inconsistency)) == 3);
    CHECK(exit_code_for(static_cast<int>(ErrorKind::Nonconvergence)) == 4);
    CHECK(exit_code_for(static_cast<int>(ErrorKind::RootNotFound)) == 4);
    CHECK(exit_code_for(-1) == 1);
}

TEST_CASE("kernels-only run") {
    const auto dir = scratch("kernels");
    auto cfg = quick(dir, {"kernels"});
    cfg.use_cache = false;
    auto rep = run_pipeline(cfg);
    CHECK(rep.ok());
    REQUIRE(rep.criteria.size() == 11);
    for (int id = 1; id <= 11; ++id) CHECK(rep.criteria[static_cast<std::size_t>(id - 1)].id == id);
    CHECK(rep.criterion(1).status == CriterionStatus::Pass);
    for (int id = 2; id <= 11; ++id) CHECK(rep.criterion(id).status == CriterionStatus::NotRun);

    // fit table against -(1+2α+2β)/4
    const std::string name = "kernels-" + rep.config_hash + ".csv";
    const auto it = std::find_if(rep.artifacts.begin(), rep.artifacts.end(), [&](const auto& a) { return a.name == name; });
    REQUIRE(it != rep.artifacts.end());
    const auto t = rows(it->content);
    CHECK(t[0] == std::vector<std::string>{"alpha", "beta", "exponent", "expected", "constant", "residual"});
    REQUIRE(t.size() == 6);
    for (std::size_t r = 1; r < t.size(); ++r) {
        const double alpha = std::stod(t[r][0]), beta = std::stod(t[r][1]);
        CHECK(std::abs(std::stod(t[r][2]) + (1 + 2 * alpha + 2 * beta) / 4) <= 0.03);
    }

    const auto files = emit_report(rep, dir.string());
    for (const auto& f : files) {
        CHECK(fs::exists(f));
        const auto stem = fs::path(f).stem().string();
        CHECK(stem.substr(stem.size() - 17) == "-" + rep.config_hash);
    }
    const auto j = nlohmann::json::parse(slurp(dir / ("report-" + rep.config_hash + ".json")));
    CHECK(j.at("criteria").size() == 11);
    CHECK(j.at("config_hash") == rep.config_hash);

    // second run into the same directory decides determinism
    const auto again = run_pipeline(cfg);
    CHECK(again.criterion(11).status == CriterionStatus::Pass);
    fs::remove_all(dir);
}

TEST_CASE("emit_report preconditions") {
    RunReport empty;
    CHECK_THROWS_AS(emit_report(empty, scratch("empty").string()), Error);
    const auto dir = scratch("blocked");
    fs::create_directories(dir.parent_path());
    { std::ofstream(dir.string()) << "a file"; }
    auto rep = run_pipeline(quick(scratch("unused"), {}));
    try {
        emit_report(rep, (dir / "sub").string());
        FAIL("expected an I/O error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
    }
    fs::remove_all(dir);
}

TEST_CASE("failing stage is reported and later stages skipped") {
    const auto dir = scratch("failing");
    auto cfg = quick(dir, {"profile", "spectrum", "kernels"});
    cfg.use_cache = false;
    cfg.tol.eigen = 1e-30;
    auto rep = run_pipeline(cfg);
    REQUIRE(rep.failed_stage() != nullptr);
    CHECK(rep.failed_stage()->name == "spectrum");
    CHECK(exit_code_for(rep.failed_stage()->error_kind) == 3);
    CHECK(rep.stages[0].status == "ok");
    CHECK(rep.stages[2].status == "skipped");
    CHECK(rep.criterion(9).status == CriterionStatus::Pass);
    CHECK(rep.criterion(8).status == CriterionStatus::NotRun);
    CHECK(rep.criterion(1).status == CriterionStatus::NotRun);
    emit_report(rep, dir.string());
    const auto j = nlohmann::json::parse(slurp(dir / ("report-" + rep.config_hash + ".json")));
    CHECK(j.at("stages")[1].at("status") == "failed");
    CHECK(j.at("stages")[1].at("exit_code") == 3);
    fs::remove_all(dir);
}

TEST_CASE("cache reuse and invalidation") {
    const auto dir = scratch("cache");
    auto cfg = quick(dir, {"profile", "spectrum"});
    const auto fresh = run_pipeline(cfg);
    CHECK(fresh.stages[0].status == "ok");
    const auto cached = run_pipeline(cfg);
    CHECK(cached.stages[0].status == "cached");
    CHECK(cached.stages[1].status == "cached");
    REQUIRE(cached.constants.size() == fresh.constants.size());
    for (std::size_t i = 0; i < fresh.constants.size(); ++i) {
        CHECK(cached.constants[i].name == fresh.constants[i].name);
        CHECK(std::abs(cached.constants[i].value - fresh.constants[i].value) <= 1e-12 * (1 + std::abs(fresh.constants[i].value)));
    }
    CHECK(cached.criteria_csv() == fresh.criteria_csv());

    // another schema version is recomputed
    for (const auto& e : fs::directory_iterator(dir / ".cache")) {
        auto j = nlohmann::json::parse(slurp(e.path()));
        j["schema"] = kCacheSchema + 1;
        std::ofstream(e.path()) << j.dump();
    }
    CHECK(run_pipeline(cfg).stages[0].status == "ok");

    fs::remove_all(dir / ".cache");
    const auto recomputed = run_pipeline(cfg);
    CHECK(recomputed.stages[0].status == "ok");
    for (std::size_t i = 0; i < fresh.constants.size(); ++i)
        CHECK(std::abs(recomputed.constants[i].value - fresh.constants[i].value) <= 1e-12 * (1 + std::abs(fresh.constants[i].value)));
    fs::remove_all(dir);
}

TEST_CASE("ledger increments decrease after the burn-in") {
    const auto dir = scratch("ledger");
    auto cfg = quick(dir, {"resum"});
    cfg.use_cache = false;
    const auto rep = run_pipeline(cfg);
    REQUIRE(rep.ok());
    const auto it = std::find_if(rep.artifacts.begin(), rep.artifacts.end(),
                                 [&](const auto& a) { return a.name == "ledger-" + rep.config_hash + ".csv"; });
    REQUIRE(it != rep.artifacts.end());
    const auto t = rows(it->content);
    CHECK(t[0] == std::vector<std::string>{"j", "increment_norm", "mass"});
    std::vector<double> inc;
    for (std::size_t r = 1; r < t.size(); ++r) inc.push_back(std::stod(t[r][1]));
    REQUIRE(inc.size() > 10);
    // burn-in: up to the largest increment
    const auto peak = static_cast<std::size_t>(std::max_element(inc.begin(), inc.end()) - inc.begin());
    CHECK(peak <= 2);
    for (std::size_t k = peak + 1; k < inc.size(); ++k) CHECK(inc[k] <= inc[k - 1]);
    for (int id : {2, 3, 4, 5}) CHECK(rep.criterion(id).status == CriterionStatus::Pass);
    fs::remove_all(dir);
}

}  // TEST_SUITE
