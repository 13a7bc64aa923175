#pragma once

// Configured runs: the stage sequence profile → spectrum → kernels → resum →
// hopf → cylinder, a content-addressed stage cache, the criterion table and
// the emitted artifact set.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hopfshock/linops.hpp"
#include "hopfshock/returnmap.hpp"

namespace hopfshock {

inline constexpr int kCacheSchema = 1;

/// Every physical and numerical constant of a run. Defaults reproduce the
/// acceptance settings; configs/default.jsonc documents each field.
struct RunConfig {
    std::string exemplar = "exemplar_2x2";
    double half_width = 30.0;
    std::size_t nodes = 601;
    int operator_order = 6;
    PlantedPair planted{};

    struct Tolerances {
        double series = 1e-14;         // Neumann increment tolerance
        double series_verify = 1e-10;  // ‖(Id - S)b - N₂‖ acceptance
        double orbit = 1e-9;           // scalar bifurcation equation
        double reduction = 1e-11;      // transverse fixed point
        double eigen = 1e-8;           // relative residual of the crossing pair
    } tol;

    struct Truncation {
        TruncationOrder order = TruncationOrder::Linear;
        double C0 = 10.0;
        std::size_t steps_per_period = 512;
    } truncation;

    struct Spectrum {
        double eps_min = -0.02, eps_max = 0.02;
        std::size_t eps_samples = 5;
        std::size_t projection_seed = 3;
    } spectrum;

    struct Kernels {
        double speed = -3.0;
        std::vector<std::array<int, 2>> pairs{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {1, 2}};
        double t_min = 1.0, t_max = 1000.0;
        std::size_t t_samples = 13;
        double half_width = 250.0;
        std::size_t nodes = 2001;
    } kernels;

    struct Resum {
        double speed = -1.0;
        double period = 1.0;
        std::size_t naive_terms = 1024;
        double mass_half_width = 170.0;
        double spacing = 0.1;
        double envelope_speed = -3.0;
        double envelope_half_width = 600.0;
        double continuization_speed = -1.0;
        double continuization_half_width = 1800.0;
        double continuization_spacing = 0.5;
        std::vector<std::size_t> continuization_n{16, 32, 64, 128};
        std::size_t identity_samples = 10000;
        std::size_t identity_seed = 5;
    } resum;

    struct Hopf {
        std::vector<double> normal_form_a{0.01, 0.02, 0.05, 0.1};
        std::vector<double> a_samples{0.025, 0.05, 0.1};
        double orbit_a = 0.05;
        bool grid_doubling = true;
        std::size_t snapshots = 64;
    } hopf;

    struct Cylinder {
        int xi_max = 16;
        int crossing_mode = 1;
        double a = 0.05;
        double transverse_scale = 0.5;  // F² = s F¹ for the gap family
        std::vector<int> gap_modes{1, 2};
        double gap_t0 = 5.0, gap_t1 = 20.0;
        std::size_t gap_steps = 2000;
        std::size_t frames = 4;
    } cylinder;

    std::string output_dir = "out";
    bool use_cache = true;
    std::string cache_dir;  // empty: <output_dir>/.cache
    std::vector<std::string> stages{"profile", "spectrum", "kernels", "resum", "hopf", "cylinder"};
    std::size_t threads = 1;

    /// JSON with // and /* */ comments; unknown keys are configuration errors.
    static RunConfig from_json(const std::string& text);
    static RunConfig from_file(const std::string& path);
    /// Throws a configuration error on the first violated invariant.
    void validate() const;
    /// Canonical JSON of the fields that change computed values (not paths,
    /// stage selection, cache policy or threads).
    std::string canonical_json() const;
    /// 16 hex digits of FNV-1a over canonical_json().
    std::string hash() const;
};

const std::vector<std::string>& pipeline_stages();

enum class CriterionStatus { Pass, Fail, NotRun };
const char* to_string(CriterionStatus s);

struct CriterionResult {
    int id = 0;
    std::string name;
    std::string stage;
    CriterionStatus status = CriterionStatus::NotRun;
    bool numeric_pass = false;
    bool runtime_pass = true;
    std::string measured;
    std::string tolerance;
    double seconds = 0.0;
};

struct Constant {
    std::string stage, name;
    double value = 0.0;
};

struct Artifact {
    std::string name;  // ⟨kind⟩-⟨hash⟩.⟨ext⟩
    std::string content;
};

struct StageReport {
    std::string name;
    std::string status = "skipped";  // ok, cached, failed, skipped
    std::string error;
    int error_kind = -1;             // ErrorKind of a failure
    double seconds = 0.0;
};

struct RunReport {
    std::string config_hash;
    std::string config_json;
    std::vector<StageReport> stages;
    std::vector<CriterionResult> criteria;  // ids 1..11, always complete
    std::vector<Constant> constants;
    std::vector<Artifact> artifacts;
    std::vector<std::string> files;         // written by emit_report

    bool ok() const;                        // no failed stage
    const StageReport* failed_stage() const;
    const CriterionResult& criterion(int id) const;

    std::string criteria_csv() const;       // id,name,stage,numeric_pass,measured,tolerance
    std::string constants_csv() const;      // stage,name,value
    std::string to_json() const;
};

/// Runs the configured stages in order. A stage failure is recorded, later
/// stages are skipped and the report still covers every criterion. CSVs of an
/// earlier run already in the output directory decide the determinism entry.
RunReport run_pipeline(const RunConfig& config);

/// Writes artifacts plus report-⟨hash⟩.{json,csv} and constants-⟨hash⟩.csv.
/// `formats` filters by extension (csv, json, svg). I/O error when the
/// directory cannot be written; argument error for an empty report.
std::vector<std::string> emit_report(RunReport& report, const std::string& dir,
                                     const std::vector<std::string>& formats = {"csv", "json", "svg"});

/// Process exit code for an error kind: 2 configuration, 3 numerical
/// assumption, 4 nonconvergence, 1 otherwise.
int exit_code_for(int error_kind);

}  // namespace hopfshock
