#include "physsym/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

namespace physsym {

namespace {

constexpr int kManifestFormat = 1;

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

nlohmann::json sim_json(const SimConfig& s)
{
    return {{"t_end", s.t_end},       {"n_points", s.n_points},         {"rtol", s.rtol},
            {"atol", s.atol},         {"initial_step", s.initial_step}, {"noise_dt", s.noise_dt},
            {"divergence_threshold", s.divergence_threshold}};
}

SimConfig sim_from_json(const nlohmann::json& j)
{
    SimConfig s;
    s.t_end = j.value("t_end", s.t_end);
    s.n_points = j.value("n_points", s.n_points);
    s.rtol = j.value("rtol", s.rtol);
    s.atol = j.value("atol", s.atol);
    s.initial_step = j.value("initial_step", s.initial_step);
    s.noise_dt = j.value("noise_dt", s.noise_dt);
    s.divergence_threshold = j.value("divergence_threshold", s.divergence_threshold);
    return s;
}

bool png_signature_ok(const fs::path& p)
{
    static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::ifstream in(p, std::ios::binary);
    char buf[8] = {};
    in.read(buf, 8);
    return in && std::equal(sig, sig + 8, reinterpret_cast<unsigned char*>(buf));
}

}  // namespace

nlohmann::json to_json(const Instance& inst)
{
    return {{"id", inst.id},
            {"seed", inst.seed},
            {"formula", inst.formula_text},
            {"formula_symbolic", inst.formula_symbolic},
            {"trajectory", inst.trajectory_csv.generic_string()},
            {"images", {inst.phase_png.generic_string(), inst.traj_png.generic_string()}},
            {"cot", inst.cot_text},
            {"term_ids", inst.term_ids},
            {"categories", inst.term_categories},
            {"parameters", inst.parameters},
            {"x0", inst.x0},
            {"v0", inst.v0},
            {"retries", inst.retries},
            {"cot_source", inst.cot_source == CotSource::Template ? "template" : "external"},
            {"annotation_fallback", inst.annotation_fallback}};
}

Instance instance_from_json(const nlohmann::json& j)
{
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.formula_text = j.at("formula").get<std::string>();
    inst.formula_symbolic = j.at("formula_symbolic").get<std::string>();
    inst.trajectory_csv = j.at("trajectory").get<std::string>();
    inst.phase_png = j.at("images").at(0).get<std::string>();
    inst.traj_png = j.at("images").at(1).get<std::string>();
    inst.cot_text = j.at("cot").get<std::string>();
    inst.term_ids = j.at("term_ids").get<std::vector<std::string>>();
    inst.term_categories = j.at("categories").get<std::vector<std::string>>();
    inst.parameters = j.at("parameters").get<std::map<std::string, double>>();
    inst.x0 = j.at("x0").get<double>();
    inst.v0 = j.at("v0").get<double>();
    inst.retries = j.at("retries").get<int>();
    inst.cot_source = j.at("cot_source").get<std::string>() == "external" ? CotSource::External : CotSource::Template;
    inst.annotation_fallback = j.at("annotation_fallback").get<bool>();
    return inst;
}

std::string instance_id(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "ps%06zu", index);
    return buf;
}

std::uint64_t attempt_seed(std::uint64_t corpus_seed, std::size_t index, int attempt)
{
    return derive_seed(derive_seed(corpus_seed, index), static_cast<std::uint64_t>(attempt));
}

Instance build_instance(std::uint64_t corpus_seed, std::size_t index, const BuildConfig& config, const fs::path& root)
{
    config.sampler.validate();
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        auto const sys = sample_formula(attempt_seed(corpus_seed, index, attempt), config.sampler);
        Trajectory traj;
        try {
            traj = simulate(sys, config.sim);
        } catch (const SimulationError&) {
            continue;
        }

        Instance inst;
        inst.id = instance_id(index);
        inst.seed = sys.seed;
        inst.formula_text = render(sys.formula);
        inst.formula_symbolic = render(sys.formula_symbolic);
        inst.term_ids = sys.term_ids;
        for (const auto& id : sys.term_ids) {
            inst.term_categories.push_back(lookup(id).category);
        }
        inst.parameters = sys.parameter_values;
        inst.x0 = sys.x0;
        inst.v0 = sys.v0;
        inst.retries = attempt;

        fs::create_directories(root / "trajectories");
        fs::create_directories(root / "images");
        inst.trajectory_csv = fs::path("trajectories") / (inst.id + ".csv");
        auto const stored = config.csv_points > 0 && config.csv_points < traj.size() ? subsample(traj, config.csv_points)
                                                                                    : traj;
        export_csv(stored, root / inst.trajectory_csv);
        auto const images = write_instance_plots(inst.id, traj, root / "images", config.plot);
        inst.phase_png = fs::path("images") / images[0].filename();
        inst.traj_png = fs::path("images") / images[1].filename();

        inst.cot_text = annotate_template(sys, traj);
        if (config.annotator) {
            try {
                inst.cot_text = annotate_external(*config.annotator, annotation_prompt(sys), {images[0], images[1]});
                inst.cot_source = CotSource::External;
            } catch (const AnnotationError&) {
                if (!config.annotator->fallback_to_template) {
                    throw;
                }
                inst.annotation_fallback = true;
            }
        }
        return inst;
    }
    throw Unstable("instance " + instance_id(index) + " diverged on all " + std::to_string(config.max_retries + 1) +
                   " attempts");
}

std::vector<std::string> check_integrity(const Instance& inst, const fs::path& root, const SimConfig& sim)
{
    std::vector<std::string> problems;
    for (const auto& rel : {inst.trajectory_csv, inst.phase_png, inst.traj_png}) {
        std::error_code ec;
        auto const size = fs::file_size(root / rel, ec);
        if (ec || size == 0) {
            problems.push_back("missing or empty file " + rel.generic_string());
        }
    }
    for (const auto& rel : {inst.phase_png, inst.traj_png}) {
        if (fs::exists(root / rel) && !png_signature_ok(root / rel)) {
            problems.push_back("not a PNG file: " + rel.generic_string());
        }
    }
    if (inst.cot_text.empty()) {
        problems.push_back("empty reasoning text");
    }

    Expr formula;
    try {
        formula = parse(inst.formula_text);
        if (!parameters_of(formula).empty()) {
            problems.push_back("formula has unbound parameters");
            return problems;
        }
        Expr const symbolic = parse(inst.formula_symbolic);
        std::map<std::string, Expr> bound;
        for (const auto& [k, v] : inst.parameters) {
            bound.emplace(k, constant(v));
        }
        if (canonicalize(substitute(symbolic, bound)) != formula) {
            problems.push_back("symbolic formula does not bind to the numeric one");
        }
    } catch (const std::exception& e) {
        problems.push_back(std::string("formula does not parse: ") + e.what());
        return problems;
    }

    Trajectory resim;
    try {
        resim = simulate(formula, inst.x0, inst.v0, inst.seed, sim);
    } catch (const SimulationError& e) {
        problems.push_back(std::string("formula does not simulate: ") + e.what());
        return problems;
    }
    if (fs::exists(root / inst.trajectory_csv)) {
        try {
            auto const stored = import_csv(root / inst.trajectory_csv);
            auto const expected = stored.size() >= 2 && stored.size() < resim.size() ? subsample(resim, stored.size())
                                                                                     : resim;
            if (!(stored == expected)) {
                problems.push_back("trajectory CSV does not match a fresh simulation");
            }
        } catch (const std::exception& e) {
            problems.push_back(std::string("trajectory CSV unreadable: ") + e.what());
        }
    }
    return problems;
}

Corpus build_corpus(std::size_t n, std::uint64_t seed, const BuildConfig& config, const fs::path& root)
{
    config.sampler.validate();
    fs::create_directories(root);
    std::vector<std::optional<Instance>> built(n);
    std::vector<std::string> unstable;
    std::exception_ptr failure;
    std::mutex mutex;
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                built[i] = build_instance(seed, i, config, root);
            } catch (const Unstable&) {
                std::lock_guard lock(mutex);
                unstable.push_back(instance_id(i));
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next = n;
            }
        }
    };
    unsigned const workers =
        std::max(1u, std::min<unsigned>(config.workers ? config.workers : std::thread::hardware_concurrency(),
                                         static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < workers; ++w) {
            pool.emplace_back(work);
        }
        work();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    if (!unstable.empty()) {
        std::sort(unstable.begin(), unstable.end());
        std::string ids;
        for (const auto& id : unstable) {
            ids += (ids.empty() ? "" : ", ") + id;
        }
        throw Unstable("no stable draw for: " + ids);
    }

    Corpus corpus;
    corpus.root = root;
    corpus.seed = seed;
    corpus.sim = config.sim;
    corpus.csv_points = config.csv_points;
    for (auto& inst : built) {
        corpus.instances.push_back(std::move(*inst));
    }
    write_manifest(corpus);
    for (auto const v : {StageVariant::MsiJoint, StageVariant::MsiGuided, StageVariant::Rgsc}) {
        write_text(root / dataset_file_name(v), assemble(corpus.instances, v, root).dump(2) + "\n");
    }
    return corpus;
}

void write_manifest(const Corpus& corpus)
{
    nlohmann::json records = nlohmann::json::array();
    for (const auto& inst : corpus.instances) {
        records.push_back(to_json(inst));
    }
    nlohmann::json const doc{{"format", kManifestFormat},
                             {"seed", corpus.seed},
                             {"count", corpus.instances.size()},
                             {"csv_points", corpus.csv_points},
                             {"sim", sim_json(corpus.sim)},
                             {"instances", records}};
    write_text(corpus.root / "manifest.json", doc.dump(2) + "\n");
}

Corpus load_corpus(const fs::path& root)
{
    std::ifstream in(root / "manifest.json");
    if (!in) {
        throw IntegrityError("no manifest.json in " + root.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("manifest.json is not valid JSON: " + std::string(e.what()));
    }
    if (doc.value("format", 0) != kManifestFormat) {
        throw IntegrityError("unsupported manifest format");
    }
    Corpus corpus;
    corpus.root = root;
    try {
        corpus.seed = doc.at("seed").get<std::uint64_t>();
        corpus.csv_points = doc.value("csv_points", corpus.csv_points);
        corpus.sim = sim_from_json(doc.value("sim", nlohmann::json::object()));
        for (const auto& r : doc.at("instances")) {
            corpus.instances.push_back(instance_from_json(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("malformed manifest: " + std::string(e.what()));
    }
    return corpus;
}

CorpusStats corpus_stats(const Corpus& corpus, bool check_files)
{
    CorpusStats s;
    s.instances = corpus.instances.size();
    std::map<std::string, std::size_t> with_category;
    for (const auto& c : categories()) {
        with_category[c] = 0;
    }
    std::size_t term_total = 0;
    for (const auto& inst : corpus.instances) {
        int const terms = static_cast<int>(inst.term_ids.size());
        ++s.term_count_histogram[terms];
        term_total += inst.term_ids.size();
        std::set<std::string> const cats(inst.term_categories.begin(), inst.term_categories.end());
        for (const auto& c : cats) {
            ++with_category[c];
        }
        ++s.retry_histogram[inst.retries];
        s.total_retries += static_cast<std::size_t>(inst.retries);
        s.external_annotations += inst.cot_source == CotSource::External ? 1 : 0;
        s.annotation_fallbacks += inst.annotation_fallback ? 1 : 0;

        for (const auto& id : inst.term_ids) {
            for (const auto& [name, range] : lookup(id).param_ranges) {
                auto it = inst.parameters.find(name);
                if (it == inst.parameters.end() || !range.contains(it->second)) {
                    ++s.parameters_out_of_range;
                    s.problems.push_back(inst.id + ": parameter " + name + " missing or out of range");
                }
            }
        }
        if (inst.cot_source == CotSource::Template) {
            auto const report = check_keywords(inst.cot_text, inst.term_categories);
            if (!report.ok()) {
                ++s.keyword_failures;
                s.problems.push_back(inst.id + ": reasoning keywords do not match the formula");
            }
        }
        if (check_files) {
            auto const problems = check_integrity(inst, corpus.root, corpus.sim);
            s.integrity_failures += problems.empty() ? 0 : 1;
            for (const auto& p : problems) {
                s.problems.push_back(inst.id + ": " + p);
            }
        }
    }
    if (s.instances > 0) {
        s.mean_term_count = static_cast<double>(term_total) / static_cast<double>(s.instances);
        for (const auto& [c, count] : with_category) {
            s.category_fraction[c] = static_cast<double>(count) / static_cast<double>(s.instances);
        }
    }
    return s;
}

nlohmann::json to_json(const CorpusStats& s)
{
    auto keyed = [](const std::map<int, std::size_t>& m) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [k, v] : m) {
            j[std::to_string(k)] = v;
        }
        return j;
    };
    return {{"instances", s.instances},
            {"term_count_histogram", keyed(s.term_count_histogram)},
            {"mean_term_count", s.mean_term_count},
            {"category_fraction", s.category_fraction},
            {"retry_histogram", keyed(s.retry_histogram)},
            {"total_retries", s.total_retries},
            {"integrity_failures", s.integrity_failures},
            {"parameters_out_of_range", s.parameters_out_of_range},
            {"keyword_failures", s.keyword_failures},
            {"external_annotations", s.external_annotations},
            {"annotation_fallbacks", s.annotation_fallbacks},
            {"problems", s.problems}};
}

}  // namespace physsym
