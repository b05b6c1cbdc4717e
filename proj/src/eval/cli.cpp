#include "physsym/eval.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace physsym {

namespace {

std::string error_kind(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const SyntaxError*>(&e)) return "syntax";
    if (dynamic_cast<const UnknownSymbol*>(&e)) return "unknown_symbol";
    if (dynamic_cast<const UnknownInstance*>(&e)) return "unknown_instance";
    if (dynamic_cast<const SubmissionError*>(&e)) return "submission";
    if (dynamic_cast<const IntegrityError*>(&e)) return "integrity";
    if (dynamic_cast<const Unstable*>(&e)) return "unstable";
    if (dynamic_cast<const SimulationError*>(&e)) return "simulation";
    if (dynamic_cast<const FormatError*>(&e)) return "format";
    if (dynamic_cast<const AnnotationError*>(&e)) return "annotation";
    if (dynamic_cast<const GroupTooSmall*>(&e)) return "group_too_small";
    if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_argument";
    return "runtime";
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + p.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text)
{
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) {
        throw std::runtime_error("cannot write " + p.string());
    }
}

std::vector<double> parse_list(const std::string& text)
{
    std::vector<double> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        auto const b = item.find_first_not_of(" \t\n");
        if (b == std::string::npos) {
            continue;
        }
        std::size_t used = 0;
        double const v = std::stod(item.substr(b), &used);
        if (item.find_first_not_of(" \t\n", b + used) != std::string::npos) {
            throw std::invalid_argument("not a number: '" + item + "'");
        }
        out.push_back(v);
    }
    return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Corpus generation, simulation and scoring for physics symbolic regression", "physsym"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    bool json = false;
    app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
    app.add_flag("--json", json, "Machine-readable output");

    // corpus
    auto* corpus = app.add_subcommand("corpus", "Build or inspect a corpus");
    corpus->require_subcommand(1);
    auto* build = corpus->add_subcommand("build", "Generate a corpus");
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out_dir;
    unsigned workers = 0;
    int dpi = 0;
    build->add_option("--n", n, "Number of instances")->required();
    build->add_option("--seed", seed, "Corpus seed");
    build->add_option("--out", out_dir, "Output directory (default: paths.corpus)");
    build->add_option("--workers", workers, "Worker threads (0: all cores)");
    build->add_option("--dpi", dpi, "Plot resolution")->check(CLI::PositiveNumber);

    auto* stats = corpus->add_subcommand("stats", "Corpus statistics and integrity report");
    std::string corpus_dir;
    bool no_files = false;
    stats->add_option("--corpus", corpus_dir, "Corpus directory (default: paths.corpus)");
    stats->add_flag("--no-files", no_files, "Skip per-file integrity checks");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Integrate a formula and write its trajectory CSV");
    std::string formula;
    double x0 = 1.0, v0 = 0.0;
    std::uint64_t noise_seed = 0;
    std::size_t points = 0;
    std::string out_file;
    sim->add_option("--formula", formula, "Acceleration a = f(x, v, t)")->required();
    sim->add_option("--x0", x0, "Initial position")->capture_default_str();
    sim->add_option("--v0", v0, "Initial velocity")->capture_default_str();
    sim->add_option("--seed", noise_seed, "Noise seed");
    sim->add_option("--subsample", points, "Keep this many uniformly spaced rows");
    sim->add_option("--out", out_file, "CSV path (default: stdout)");

    // render
    auto* render_cmd = app.add_subcommand("render", "Phase portrait and time-series PNGs");
    std::string traj_file;
    std::string plot_id = "plot";
    render_cmd->add_option("--traj", traj_file, "Trajectory CSV")->check(CLI::ExistingFile);
    render_cmd->add_option("--formula", formula, "Simulate this formula instead of reading a CSV");
    render_cmd->add_option("--x0", x0, "Initial position");
    render_cmd->add_option("--v0", v0, "Initial velocity");
    render_cmd->add_option("--seed", noise_seed, "Noise seed");
    render_cmd->add_option("--id", plot_id, "File name stem");
    render_cmd->add_option("--out-dir", out_dir, "Output directory (default: paths.output)");
    render_cmd->add_option("--dpi", dpi, "Plot resolution")->check(CLI::PositiveNumber);

    // score
    auto* score = app.add_subcommand("score", "Score candidate formulas against a corpus");
    std::string submissions;
    bool sr2 = false, timing = false;
    std::string table_file;
    score->add_option("--corpus", corpus_dir, "Corpus directory (default: paths.corpus)");
    score->add_option("--submissions", submissions, "JSON Lines file")->required()->check(CLI::ExistingFile);
    score->add_flag("--sr2", sr2, "Run residual realignment per instance");
    score->add_flag("--timing", timing, "Record per-row runtime");
    score->add_option("--workers", workers, "Worker threads");
    score->add_option("--out", out_file, "Also write the JSON report here");
    score->add_option("--table", table_file, "Also write the text table here");

    // realign
    auto* realign_cmd = app.add_subcommand("realign", "Fit an ansatz, regress its residual and realign");
    std::string ansatz;
    realign_cmd->add_option("--ansatz", ansatz, "Ansatz formula, placeholders allowed")->required();
    realign_cmd->add_option("--traj", traj_file, "Trajectory CSV")->required()->check(CLI::ExistingFile);
    realign_cmd->add_option("--seed", noise_seed, "GP seed (default: gp.seed)");
    realign_cmd->add_option("--out", out_file, "Also write the JSON report here");

    // reward
    auto* reward = app.add_subcommand("reward", "Reward breakdown of one response");
    std::string gt, response_file, response_text;
    reward->add_option("--gt", gt, "Ground-truth formula")->required();
    auto* rf = reward->add_option("--response", response_file, "File holding the response")->check(CLI::ExistingFile);
    auto* rt = reward->add_option("--response-text", response_text, "Response given inline");
    rf->excludes(rt);
    rt->excludes(rf);

    // advantages
    auto* adv = app.add_subcommand("advantages", "Group-normalized advantages of a reward list");
    std::string rewards;
    double epsilon = 1e-8;
    adv->add_option("--rewards", rewards, "Comma-separated rewards (default: read stdin)");
    adv->add_option("--epsilon", epsilon, "Stabilizer added to the standard deviation")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << nlohmann::json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }

    try {
        AppConfig cfg = config_path.empty() ? AppConfig{} : load_config(config_path);

        if (*build) {
            if (workers > 0) {
                cfg.build.workers = workers;
            }
            if (dpi > 0) {
                cfg.build.plot.dpi = dpi;
            }
            fs::path const root = out_dir.empty() ? cfg.corpus_dir : fs::path(out_dir);
            auto const c = build_corpus(n, seed, cfg.build, root);
            std::size_t retries = 0;
            for (const auto& inst : c.instances) {
                retries += static_cast<std::size_t>(inst.retries);
            }
            if (json) {
                out << nlohmann::json{{"root", root.generic_string()},
                                      {"instances", c.instances.size()},
                                      {"seed", seed},
                                      {"total_retries", retries}}
                           .dump()
                    << '\n';
            } else {
                out << "built " << c.instances.size() << " instances in " << root.generic_string() << " ("
                    << retries << " stability retries)\n";
            }
        } else if (*stats) {
            auto const c = load_corpus(corpus_dir.empty() ? cfg.corpus_dir : fs::path(corpus_dir));
            auto const s = corpus_stats(c, !no_files);
            if (json) {
                out << to_json(s).dump(2) << '\n';
            } else {
                out << "instances:          " << s.instances << '\n'
                    << "mean term count:    " << format_number(s.mean_term_count) << '\n'
                    << "term counts:       ";
                for (const auto& [k, v] : s.term_count_histogram) {
                    out << ' ' << k << ':' << v;
                }
                out << "\ncategory coverage:\n";
                for (const auto& [c_name, frac] : s.category_fraction) {
                    out << "  " << c_name << ' ' << format_number(frac) << '\n';
                }
                out << "stability retries:  " << s.total_retries << '\n'
                    << "integrity failures: " << s.integrity_failures << '\n'
                    << "keyword failures:   " << s.keyword_failures << '\n'
                    << "params out of range:" << ' ' << s.parameters_out_of_range << '\n';
                for (const auto& p : s.problems) {
                    out << "  " << p << '\n';
                }
            }
            return s.integrity_failures + s.keyword_failures + s.parameters_out_of_range == 0 ? 0 : 3;
        } else if (*sim) {
            auto traj = simulate(parse(formula), x0, v0, noise_seed, cfg.build.sim);
            if (points > 0) {
                traj = subsample(traj, points);
            }
            if (!out_file.empty()) {
                export_csv(traj, out_file);
            }
            if (json) {
                nlohmann::json j{{"points", traj.size()}, {"x_end", traj.x.back()}, {"v_end", traj.v.back()}};
                j["csv"] = out_file.empty() ? nlohmann::json(to_csv(traj)) : nlohmann::json(out_file);
                out << j.dump() << '\n';
            } else if (out_file.empty()) {
                write_csv(traj, out);
            } else {
                out << "wrote " << traj.size() << " rows to " << out_file << '\n';
            }
        } else if (*render_cmd) {
            if (traj_file.empty() == formula.empty()) {
                throw std::invalid_argument("give exactly one of --traj and --formula");
            }
            auto const traj = traj_file.empty() ? simulate(parse(formula), x0, v0, noise_seed, cfg.build.sim)
                                                : import_csv(traj_file);
            if (dpi > 0) {
                cfg.build.plot.dpi = dpi;
            }
            fs::path const dir = out_dir.empty() ? cfg.output_dir : fs::path(out_dir);
            fs::create_directories(dir);
            auto const paths = write_instance_plots(plot_id, traj, dir, cfg.build.plot);
            if (json) {
                out << nlohmann::json{{"phase", paths[0].generic_string()}, {"traj", paths[1].generic_string()}}.dump()
                    << '\n';
            } else {
                out << paths[0].generic_string() << '\n' << paths[1].generic_string() << '\n';
            }
        } else if (*score) {
            auto const c = load_corpus(corpus_dir.empty() ? cfg.corpus_dir : fs::path(corpus_dir));
            ScoreOptions opts;
            opts.run_sr2 = sr2;
            opts.gp = cfg.gp;
            opts.fit = cfg.fit;
            opts.workers = std::max(1u, workers);
            opts.timing = timing;
            auto const report = score_submission(read_submissions(fs::path(submissions)), c, opts);
            auto const doc = to_json(report).dump(2) + "\n";
            auto const table = to_table(report);
            if (!out_file.empty()) {
                write_file(out_file, doc);
            }
            if (!table_file.empty()) {
                write_file(table_file, table);
            }
            out << (json ? doc : table);
        } else if (*realign_cmd) {
            auto const traj = import_csv(traj_file);
            GPConfig gp = cfg.gp;
            if (realign_cmd->count("--seed") > 0) {
                gp.seed = noise_seed;
            }
            auto const r = refine(parse(ansatz), traj, gp, cfg.fit);
            nlohmann::json const doc{{"ansatz", render(parse(ansatz))},
                                     {"fitted_ansatz", render(r.ansatz)},
                                     {"residual", render(r.residual)},
                                     {"final", render(r.final_expr)},
                                     {"ansatz_mse", r.ansatz_mse},
                                     {"final_mse", r.final_mse},
                                     {"kept_ansatz", r.kept_ansatz}};
            if (!out_file.empty()) {
                write_file(out_file, doc.dump(2) + "\n");
            }
            if (json) {
                out << doc.dump(2) << '\n';
            } else {
                out << render(r.final_expr) << '\n'
                    << "ansatz_mse " << format_number(r.ansatz_mse) << '\n'
                    << "final_mse  " << format_number(r.final_mse) << '\n';
            }
        } else if (*reward) {
            if (response_file.empty() && reward->count("--response-text") == 0) {
                throw std::invalid_argument("give --response or --response-text");
            }
            std::string const text = response_file.empty() ? response_text : read_file(response_file);
            auto const b = composite_reward(text, parse(gt), cfg.weights);
            if (json) {
                out << to_json(b).dump() << '\n';
            } else {
                out << "format     " << b.format << '\n'
                    << "structural " << format_number(b.structural) << '\n'
                    << "accuracy   " << b.accuracy << '\n'
                    << "composite  " << format_number(b.composite) << '\n';
            }
        } else if (*adv) {
            std::string text = rewards;
            if (adv->count("--rewards") == 0) {
                std::ostringstream buf;
                buf << std::cin.rdbuf();
                text = buf.str();
                std::replace(text.begin(), text.end(), '\n', ',');
            }
            auto const a = group_advantages(parse_list(text), epsilon);
            if (json) {
                out << nlohmann::json{{"advantages", a}}.dump() << '\n';
            } else {
                for (double const v : a) {
                    out << format_number(v) << '\n';
                }
            }
        }
    } catch (const std::exception& e) {
        err << nlohmann::json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace physsym
