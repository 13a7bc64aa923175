// Acceptance run: the default pipeline twice without cache. The first run
// decides criteria 1-10, the byte comparison of both runs' CSVs criterion 11.
// One line per criterion; exit status 0 only when all pass.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "hopfshock/error.hpp"
#include "hopfshock/pipeline.hpp"

using namespace hopfshock;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> csv_files(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        out[e.path().filename().string()] = s.str();
    }
    return out;
}

RunReport run_into(RunConfig cfg, const fs::path& dir) {
    cfg.output_dir = dir.string();
    cfg.use_cache = false;
    fs::remove_all(dir);
    RunReport rep = run_pipeline(cfg);
    emit_report(rep, cfg.output_dir);
    return rep;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "hopfshock-acceptance";
    RunConfig cfg;
    if (argc > 2) cfg = RunConfig::from_file(argv[2]);

    try {
        const RunReport first = run_into(cfg, root / "run1");
        for (const auto& s : first.stages)
            fmt::print("# stage {:<9} {:<8} {:9.2f} s {}\n", s.name, s.status, s.seconds, s.error);
        std::fflush(stdout);
        const RunReport second = run_into(cfg, root / "run2");

        const auto a = csv_files(root / "run1"), b = csv_files(root / "run2");
        std::size_t same = 0;
        std::string differing;
        for (const auto& [name, content] : a) {
            const auto it = b.find(name);
            if (it != b.end() && it->second == content) ++same;
            else differing += " " + name;
        }
        const bool det = first.ok() && second.ok() && !a.empty() && a.size() == b.size() && same == a.size();

        bool all = true;
        for (int id = 1; id <= 10; ++id) {
            const auto& c = first.criterion(id);
            const bool pass = c.status == CriterionStatus::Pass;
            all = all && pass;
            fmt::print("criterion {:>2} {} | {} | measured: {} | required: {} | {:.2f} s\n", id, pass ? "PASS" : "FAIL",
                       c.name, c.measured, c.tolerance.empty() ? "-" : c.tolerance, c.seconds);
        }
        all = all && det;
        fmt::print("criterion 11 {} | determinism | measured: {} of {} CSV files bit-identical across two runs{} | "
                   "required: bit-identical CSV outputs\n",
                   det ? "PASS" : "FAIL", same, a.size(), differing.empty() ? "" : "; differing:" + differing);
        return all ? 0 : 1;
    } catch (const Error& e) {
        fmt::print("acceptance aborted: {}\n", e.what());
        return 1;
    }
}
