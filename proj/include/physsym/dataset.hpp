#pragma once

#include "physsym/sim.hpp"
#include "physsym/terms.hpp"
#include "physsym/viz.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace physsym {

namespace fs = std::filesystem;

enum class StageVariant { MsiJoint, MsiGuided, Rgsc };

std::string_view variant_name(StageVariant v);  // "MSI_JOINT", ...
/// Accepts the names above, case-insensitively, with '-' or '_'.
StageVariant parse_variant(std::string_view name);

enum class CotSource { Template, External };

struct Instance {
    std::string id;
    std::uint64_t seed = 0;  // seed of the accepted attempt
    std::string formula_text;
    std::string formula_symbolic;
    // relative to the corpus root
    fs::path trajectory_csv;
    fs::path phase_png;
    fs::path traj_png;
    std::string cot_text;
    std::vector<std::string> term_ids;
    std::vector<std::string> term_categories;
    std::map<std::string, double> parameters;
    double x0 = 0.0;
    double v0 = 0.0;
    int retries = 0;
    CotSource cot_source = CotSource::Template;
    bool annotation_fallback = false;  // external annotation failed, template used
};

nlohmann::json to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& j);

// ---- annotation -------------------------------------------------------------

/// Deterministic reasoning text built from per-category templates and simple
/// trajectory features.
std::string annotate_template(const GeneratedSystem& system, const Trajectory& traj);

struct KeywordRule {
    std::string category;
    /// All must appear when the category is present; the first must not
    /// appear when it is absent.
    std::vector<std::string> keywords;
};

const std::vector<KeywordRule>& keyword_rules();

struct KeywordReport {
    std::vector<std::string> missing;   // "category: keyword"
    std::vector<std::string> spurious;  // keywords of absent categories
    bool ok() const { return missing.empty() && spurious.empty(); }
};

KeywordReport check_keywords(std::string_view text, const std::vector<std::string>& present_categories);

class AnnotationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class NetworkError : public AnnotationError {
public:
    using AnnotationError::AnnotationError;
};
class AuthError : public AnnotationError {
public:
    using AnnotationError::AnnotationError;
};
class RateLimited : public AnnotationError {
public:
    using AnnotationError::AnnotationError;
};
class MalformedResponse : public AnnotationError {
public:
    using AnnotationError::AnnotationError;
};

/// Chat-completion endpoint in the common messages/choices format.
struct AnnotatorConfig {
    std::string endpoint;  // e.g. https://host/v1/chat/completions
    std::string model = "gpt-4o";
    std::string api_key_env = "ANNOTATOR_API_KEY";
    std::chrono::milliseconds timeout{60000};
    int max_attempts = 5;
    std::chrono::milliseconds initial_backoff{1000};
    bool fallback_to_template = true;
};

/// Sends prompt and images; returns the reply text. Rate-limit responses are
/// retried with exponential backoff (or the server's Retry-After).
std::string annotate_external(const AnnotatorConfig& config, const std::string& prompt,
                              const std::vector<fs::path>& image_paths);

/// Annotator prompt for a system, from the shipped template.
std::string annotation_prompt(const GeneratedSystem& system);

// ---- instance building ------------------------------------------------------

class Unstable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BuildConfig {
    SamplerConfig sampler;
    SimConfig sim;
    PlotStyle plot;
    /// Rows written to each trajectory CSV; 0 keeps the full simulation grid.
    std::size_t csv_points = 100;
    int max_retries = 16;
    std::optional<AnnotatorConfig> annotator;
    /// 0 uses the hardware concurrency.
    unsigned workers = 0;
};

std::string instance_id(std::size_t index);

/// Seed of a build attempt; attempt 0 is the first try.
std::uint64_t attempt_seed(std::uint64_t corpus_seed, std::size_t index, int attempt);

/// Samples, simulates (retrying unstable draws), renders and annotates one
/// instance, writing its files under root. Throws Unstable when every
/// attempt diverges.
Instance build_instance(std::uint64_t corpus_seed, std::size_t index, const BuildConfig& config, const fs::path& root);

/// Problems with an instance's files and formulas; empty when sound. The
/// formula is re-simulated under sim and compared with the stored CSV.
std::vector<std::string> check_integrity(const Instance& inst, const fs::path& root, const SimConfig& sim = {});

// ---- corpus -----------------------------------------------------------------

struct Corpus {
    fs::path root;
    std::uint64_t seed = 0;
    SimConfig sim;
    std::size_t csv_points = 100;
    std::vector<Instance> instances;
};

/// Builds n instances in parallel, then writes manifest.json and the three
/// dataset files. Throws Unstable (after all workers finish) if any instance
/// could not be stabilized.
Corpus build_corpus(std::size_t n, std::uint64_t seed, const BuildConfig& config, const fs::path& root);

void write_manifest(const Corpus& corpus);
Corpus load_corpus(const fs::path& root);

/// System prompt shipped for a variant.
const std::string& system_prompt(StageVariant v);

/// Dataset document for one training stage. Throws IntegrityError if a
/// referenced file is missing.
nlohmann::json assemble(const std::vector<Instance>& instances, StageVariant variant, const fs::path& root);

fs::path dataset_file_name(StageVariant v);

struct CorpusStats {
    std::size_t instances = 0;
    std::map<int, std::size_t> term_count_histogram;
    double mean_term_count = 0.0;
    std::map<std::string, double> category_fraction;
    std::map<int, std::size_t> retry_histogram;
    std::size_t total_retries = 0;
    std::size_t integrity_failures = 0;
    std::size_t parameters_out_of_range = 0;
    std::size_t keyword_failures = 0;
    std::size_t external_annotations = 0;
    std::size_t annotation_fallbacks = 0;
    std::vector<std::string> problems;  // "id: message"
};

/// With check_files, every instance also goes through check_integrity.
CorpusStats corpus_stats(const Corpus& corpus, bool check_files = true);
nlohmann::json to_json(const CorpusStats& stats);

}  // namespace physsym
