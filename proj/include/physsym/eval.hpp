#pragma once

#include "physsym/dataset.hpp"
#include "physsym/reward.hpp"
#include "physsym/sr2.hpp"

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace physsym {

/// One candidate: either a raw tagged model response or a bare formula.
struct Submission {
    std::string instance_id;
    std::optional<std::string> response_text;
    std::optional<std::string> formula_text;
};

class SubmissionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownInstance : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// JSON Lines, one object per line with "instance_id" and exactly one of
/// "response_text" / "formula_text". Blank lines are skipped.
std::vector<Submission> read_submissions(std::istream& in);
std::vector<Submission> read_submissions(const fs::path& path);

struct ScoreOptions {
    bool run_sr2 = false;
    GPConfig gp;
    FitOptions fit;
    unsigned workers = 1;
    /// Adds per-row wall time to the report (which then differs between runs).
    bool timing = false;
};

struct ReportRow {
    std::string instance_id;
    bool parse_ok = false;
    std::string candidate;  // canonical rendering, empty when unparsed
    double structural = 0.0;
    int accuracy = 0;
    std::optional<double> pre_mse;   // fitted candidate, SR² runs only
    std::optional<double> post_mse;  // after realignment
    std::string final_formula;
    std::string note;  // parse or fit failure
    std::optional<double> runtime_s;
};

struct Report {
    std::vector<ReportRow> rows;
    double mean_structural = 0.0;
    double accuracy_rate = 0.0;
    std::optional<double> mean_pre_mse;
    std::optional<double> mean_post_mse;
    ScoreOptions options;
};

/// Scores every submission against the corpus ground truth. Candidates with
/// placeholders are compared with the symbolic ground truth, numeric ones
/// with the numeric formula. Throws UnknownInstance before scoring anything
/// if an id is not in the corpus.
Report score_submission(const std::vector<Submission>& submissions, const Corpus& corpus,
                        const ScoreOptions& options = {});

nlohmann::json to_json(const Report& report);
std::string to_table(const Report& report);

nlohmann::json to_json(const RewardBreakdown& breakdown);

// ---- configuration ----------------------------------------------------------

struct AppConfig {
    BuildConfig build;
    RewardWeights weights;
    GPConfig gp;
    FitOptions fit;
    fs::path corpus_dir = "corpus";
    fs::path output_dir = ".";
};

/// INI file with sections [sampler], [sim], [plot], [build], [annotator],
/// [reward], [gp], [fit] and [paths]. Unknown sections or keys raise
/// ConfigError.
AppConfig load_config(const fs::path& path);
AppConfig parse_config(std::istream& in);

/// Command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace physsym
