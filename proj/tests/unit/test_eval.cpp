#include <doctest.h>

#include "physsym/eval.hpp"

#include <fstream>
#include <sstream>

using namespace physsym;

namespace {

fs::path fixture(const std::string& name) { return fs::path(PHYSSYM_FIXTURE_DIR) / name; }

nlohmann::json load_json(const fs::path& p)
{
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

fs::path scratch(const std::string& name)
{
    auto const dir = fs::temp_directory_path() / ("physsym_test_eval_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree(const fs::path& root)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
        }
    }
    return out;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "physsym");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    int const code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

Corpus fixture_corpus(const nlohmann::json& doc)
{
    Corpus c;
    for (const auto& j : doc["instances"]) {
        Instance inst;
        inst.id = j["id"];
        inst.formula_text = j["formula"];
        inst.formula_symbolic = j["formula_symbolic"];
        c.instances.push_back(inst);
    }
    return c;
}

std::vector<Submission> fixture_submissions(const nlohmann::json& doc)
{
    std::stringstream lines;
    for (const auto& s : doc["submissions"]) {
        lines << s.dump() << '\n';
    }
    return read_submissions(lines);
}

GPConfig small_gp()
{
    GPConfig gp;
    gp.population = 120;
    gp.generations = 8;
    return gp;
}

}  // namespace

TEST_CASE("submission parsing")
{
    std::stringstream ok(R"({"instance_id": "a", "formula_text": "-x"}

{"instance_id": "b", "response_text": "<answer>-x</answer>", "formula_text": null}
)");
    auto const subs = read_submissions(ok);
    REQUIRE(subs.size() == 2);
    CHECK(subs[0].formula_text == "-x");
    CHECK_FALSE(subs[0].response_text);
    CHECK(subs[1].response_text == "<answer>-x</answer>");

    for (const char* bad : {R"({"instance_id": "a"})", R"({"instance_id": "a", "formula_text": "x", "response_text": "y"})",
                            R"({"formula_text": "x"})", R"([1, 2])", "not json", R"({"instance_id": "a", "formula_text": 3})"}) {
        std::stringstream in(bad);
        CHECK_THROWS_AS(read_submissions(in), SubmissionError);
    }
}

TEST_CASE("hand-scored fixture")
{
    auto const doc = load_json(fixture("score_fixture.json"));
    auto const corpus = fixture_corpus(doc);
    auto const before = gp_invocations();
    auto const report = score_submission(fixture_submissions(doc), corpus);
    CHECK(gp_invocations() == before);  // no regression without SR²

    REQUIRE(report.rows.size() == doc["expected"].size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& want = doc["expected"][i];
        const auto& row = report.rows[i];
        CAPTURE(row.instance_id);
        CHECK(row.instance_id == want["id"]);
        CHECK(row.parse_ok == want["parse_ok"].get<bool>());
        CHECK(row.structural == want["S_struct"][0].get<double>() / want["S_struct"][1].get<double>());
        CHECK(row.accuracy == want["S_acc"].get<int>());
        CHECK_FALSE(row.post_mse);
    }
    auto const& agg = doc["aggregate"];
    CHECK(std::abs(report.mean_structural - agg["S_struct"][0].get<double>() / agg["S_struct"][1].get<double>()) < 1e-15);
    CHECK(report.accuracy_rate == agg["S_acc"][0].get<double>() / agg["S_acc"][1].get<double>());

    // aggregates are exactly the row means
    double s = 0.0, a = 0.0;
    for (const auto& row : report.rows) {
        s += row.structural;
        a += row.accuracy;
    }
    CHECK(report.mean_structural == s / static_cast<double>(report.rows.size()));
    CHECK(report.accuracy_rate == a / static_cast<double>(report.rows.size()));

    // stable output, independent of the worker count
    ScoreOptions parallel;
    parallel.workers = 3;
    CHECK(to_json(score_submission(fixture_submissions(doc), corpus, parallel))["rows"] == to_json(report)["rows"]);
    CHECK(to_table(report) == to_table(score_submission(fixture_submissions(doc), corpus)));
    CHECK(to_table(report).find("f06") != std::string::npos);

    std::vector<Submission> unknown{{"nope", std::nullopt, std::string("-x")}};
    CHECK_THROWS_AS(score_submission(unknown, corpus), UnknownInstance);
    CHECK(score_submission({}, corpus).rows.empty());
}

TEST_CASE("scoring with residual realignment")
{
    auto const root = scratch("sr2_corpus");
    BuildConfig cfg;
    cfg.plot.dpi = 40;
    cfg.workers = 1;
    auto const corpus = build_corpus(4, 5, cfg, root);

    std::vector<Submission> self, empty;
    for (const auto& inst : corpus.instances) {
        self.push_back({inst.id, std::nullopt, inst.formula_text});
        empty.push_back({inst.id, std::nullopt, std::string("")});
    }
    ScoreOptions opts;
    opts.run_sr2 = true;
    opts.gp = small_gp();
    auto const before = gp_invocations();
    auto const report = score_submission(self, corpus, opts);
    CHECK(gp_invocations() > before);
    CHECK(report.mean_structural == 1.0);
    CHECK(report.accuracy_rate == 1.0);
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& inst = corpus.instances[i];
        auto const traj = import_csv(root / inst.trajectory_csv);
        double const floor = post_mse(parse(inst.formula_text), traj);  // noise taken at 0
        CAPTURE(inst.formula_text);
        REQUIRE(report.rows[i].post_mse);
        CHECK(*report.rows[i].post_mse <= floor + 1e-12);
        CHECK(*report.rows[i].pre_mse == floor);
    }
    REQUIRE(report.mean_post_mse);
    double post = 0.0;
    for (const auto& r : report.rows) {
        post += *r.post_mse;
    }
    CHECK(*report.mean_post_mse == post / 4.0);

    auto const fallback = score_submission(empty, corpus, opts);
    for (std::size_t i = 0; i < fallback.rows.size(); ++i) {
        const auto& row = fallback.rows[i];
        CHECK_FALSE(row.parse_ok);
        CHECK(row.structural == 0.0);
        CHECK(row.accuracy == 0);
        REQUIRE(row.post_mse);
        auto const traj = import_csv(root / corpus.instances[i].trajectory_csv);
        CHECK(*row.pre_mse == post_mse(parse("0"), traj));
        CHECK(*row.post_mse <= *row.pre_mse);
    }
    CHECK(to_json(fallback) == to_json(score_submission(empty, corpus, opts)));
}

TEST_CASE("config file")
{
    std::stringstream good(R"(
[sampler]
term_count_weights = 2:0.5, 3:0.5
disabled_categories = noise, trig

[sim]
t_end = 10
n_points = 501

[reward]
structural = 0.5
accuracy = 0.4

[gp]
population = 64
use_quintic = false
parsimony = 0.001

[annotator]
endpoint = http://localhost:9/v1/chat/completions
fallback = no

[paths]
corpus = /data/corpus
)");
    auto const cfg = parse_config(good);
    CHECK(cfg.build.sampler.term_count_weights == std::map<int, double>{{2, 0.5}, {3, 0.5}});
    CHECK_FALSE(cfg.build.sampler.enabled("noise"));
    CHECK(cfg.build.sampler.enabled("cubic"));
    CHECK(cfg.build.sim.t_end == 10.0);
    CHECK(cfg.build.sim.n_points == 501);
    CHECK(cfg.weights.structural == 0.5);
    CHECK(cfg.weights.format == 0.1);
    CHECK(cfg.gp.population == 64);
    CHECK_FALSE(cfg.gp.use_quintic);
    CHECK(cfg.gp.parsimony == 0.001);
    REQUIRE(cfg.build.annotator);
    CHECK_FALSE(cfg.build.annotator->fallback_to_template);
    CHECK(cfg.corpus_dir == "/data/corpus");

    for (const char* bad : {"[sim]\nrtoll = 1e-6\n", "[simulation]\nrtol = 1\n", "[sim]\nrtol = fast\n",
                            "[gp]\nuse_sin = maybe\n", "[sampler]\nterm_count_weights = 2:0.7, 3:0.7\n",
                            "[sampler]\ndisabled_categories = magnetism\n", "[gp]\np_crossover = 2\n",
                            "[reward]\nformat = -1\n", "stray = 1\n", "[sim\n"}) {
        std::stringstream in(bad);
        CAPTURE(bad);
        CHECK_THROWS_AS(parse_config(in), ConfigError);
    }
    CHECK_THROWS_AS(load_config("/nonexistent/physsym.ini"), ConfigError);
}

TEST_CASE("example config spells out the defaults")
{
    auto const cfg = load_config(fs::path(PHYSSYM_FIXTURE_DIR) / ".." / ".." / "assets" / "physsym.example.ini");
    AppConfig const defaults;
    CHECK(cfg.build.sampler.term_count_weights == defaults.build.sampler.term_count_weights);
    CHECK(cfg.build.sampler.category_enabled.empty());
    const auto& s = cfg.build.sim;
    const auto& d = defaults.build.sim;
    CHECK((s.t_end == d.t_end && s.n_points == d.n_points && s.rtol == d.rtol && s.atol == d.atol &&
           s.initial_step == d.initial_step && s.noise_dt == d.noise_dt &&
           s.divergence_threshold == d.divergence_threshold && s.max_steps == d.max_steps));
    CHECK(cfg.build.plot.dpi == defaults.build.plot.dpi);
    CHECK(cfg.build.plot.width_in == defaults.build.plot.width_in);
    CHECK(cfg.build.plot.line_width_pt == defaults.build.plot.line_width_pt);
    CHECK(cfg.build.csv_points == defaults.build.csv_points);
    CHECK(cfg.build.max_retries == defaults.build.max_retries);
    CHECK(cfg.build.workers == defaults.build.workers);
    CHECK_FALSE(cfg.build.annotator);
    CHECK(cfg.weights.format == defaults.weights.format);
    CHECK(cfg.weights.structural == defaults.weights.structural);
    CHECK(cfg.weights.accuracy == defaults.weights.accuracy);
    CHECK(cfg.gp.population == defaults.gp.population);
    CHECK(cfg.gp.generations == defaults.gp.generations);
    CHECK(cfg.gp.p_constant_jitter == defaults.gp.p_constant_jitter);
    CHECK(cfg.gp.max_nodes == defaults.gp.max_nodes);
    CHECK_FALSE(cfg.gp.parsimony);
    CHECK(cfg.gp.optimize_periodic == defaults.gp.optimize_periodic);
    CHECK(cfg.fit.grid_budget == defaults.fit.grid_budget);
    CHECK(cfg.corpus_dir == defaults.corpus_dir);
    CHECK(cfg.output_dir == defaults.output_dir);
}

TEST_CASE("cli: corpus build is reproducible and stats pass")
{
    auto const a = scratch("cli_a");
    auto const b = scratch("cli_b");
    auto const ra = cli({"corpus", "build", "--n", "6", "--seed", "7", "--out", a.string(), "--dpi", "40"});
    auto const rb = cli({"corpus", "build", "--n", "6", "--seed", "7", "--out", b.string(), "--dpi", "40", "--json"});
    REQUIRE(ra.code == 0);
    REQUIRE(rb.code == 0);
    CHECK(tree(a) == tree(b));
    CHECK(nlohmann::json::parse(rb.out)["instances"] == 6);

    auto const stats = cli({"--json", "corpus", "stats", "--corpus", a.string()});
    REQUIRE(stats.code == 0);
    auto const s = nlohmann::json::parse(stats.out);
    CHECK(s["instances"] == 6);
    CHECK(s["integrity_failures"] == 0);
    CHECK(cli({"corpus", "stats", "--corpus", a.string()}).out == cli({"corpus", "stats", "--corpus", a.string()}).out);

    auto const subs = a / "subs.jsonl";
    {
        std::ofstream out(subs);
        out << R"({"instance_id": "ps000000", "formula_text": "-k*x"})" << '\n';
        out << R"({"instance_id": "ps000001", "response_text": "no tags"})" << '\n';
    }
    auto const score = cli({"score", "--corpus", a.string(), "--submissions", subs.string(), "--json"});
    REQUIRE(score.code == 0);
    auto const report = nlohmann::json::parse(score.out);
    CHECK(report["rows"].size() == 2);
    CHECK(report["rows"][1]["parse_ok"] == false);
    CHECK(score.out == cli({"score", "--corpus", a.string(), "--submissions", subs.string(), "--json"}).out);
    auto const text = cli({"score", "--corpus", a.string(), "--submissions", subs.string()});
    CHECK(text.out.find("S_struct") != std::string::npos);

    {
        std::ofstream out(subs);
        out << R"({"instance_id": "ps999999", "formula_text": "-x"})" << '\n';
    }
    auto const unknown = cli({"score", "--corpus", a.string(), "--submissions", subs.string()});
    CHECK(unknown.code != 0);
    CHECK(nlohmann::json::parse(unknown.err)["error"] == "unknown_instance");
}

TEST_CASE("cli: reward, advantages, simulate, render, realign")
{
    auto const dir = scratch("cli_misc");
    std::string const response = "<think>drag grows with speed</think><answer>-k*x - c*v**3</answer>";
    {
        std::ofstream out(dir / "response.txt");
        out << response;
    }
    auto const r = cli({"reward", "--gt", "-k*x - c*v**3", "--response", (dir / "response.txt").string(), "--json"});
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out) == to_json(composite_reward(response, parse("-k*x - c*v**3"))));

    auto const adv = cli({"advantages", "--rewards", "1,0,0,1", "--json"});
    REQUIRE(adv.code == 0);
    auto const values = nlohmann::json::parse(adv.out)["advantages"].get<std::vector<double>>();
    std::vector<double> const rewards{1, 0, 0, 1};
    CHECK(values == group_advantages(rewards));

    auto const csv = dir / "case.csv";
    auto const sim = cli({"simulate", "--formula", "-x - 0.1*v", "--x0", "1", "--out", csv.string()});
    REQUIRE(sim.code == 0);
    auto const traj = import_csv(csv);
    CHECK(traj == simulate(parse("-x - 0.1*v"), 1.0, 0.0, 0));
    CHECK(cli({"simulate", "--formula", "-x", "--subsample", "100"}).out == to_csv(subsample(simulate(parse("-x"), 1.0, 0.0, 0), 100)));

    auto const render_out = cli({"render", "--traj", csv.string(), "--out-dir", dir.string(), "--id", "case", "--dpi", "40", "--json"});
    REQUIRE(render_out.code == 0);
    CHECK(fs::exists(dir / "case_phase.png"));
    CHECK(fs::exists(dir / "case_traj.png"));

    // planted residual: the ansatz misses the damping term
    auto const realigned = cli({"realign", "--ansatz", "-x", "--traj", csv.string(), "--json"});
    REQUIRE(realigned.code == 0);
    auto const doc = nlohmann::json::parse(realigned.out);
    Expr const final_expr = parse(doc["final"].get<std::string>());
    auto const terms = decompose_terms(final_expr);
    REQUIRE(terms.size() == 2);
    CHECK(skeleton_set(final_expr) == skeleton_set(parse("-x - v")));
    for (const auto& t : terms) {
        auto const split = split_coefficient(t);
        bool const is_v = skeletonize(t) == skeletonize(parse("-v"));
        CHECK(std::abs(split.coefficient - (is_v ? -0.1 : -1.0)) <= 1e-3);
    }
    CHECK(doc["final_mse"].get<double>() < doc["ansatz_mse"].get<double>());
}

TEST_CASE("cli: errors are structured")
{
    auto const syntax = cli({"simulate", "--formula", "-x +"});
    CHECK(syntax.code == 1);
    CHECK(nlohmann::json::parse(syntax.err)["error"] == "syntax");

    auto const usage = cli({"bogus"});
    CHECK(usage.code == 2);
    CHECK(nlohmann::json::parse(usage.err)["error"] == "usage");

    auto const missing = cli({"reward", "--gt", "-x"});
    CHECK(missing.code == 1);
    CHECK(nlohmann::json::parse(missing.err)["error"] == "invalid_argument");

    auto const small = cli({"advantages", "--rewards", "0.5"});
    CHECK(nlohmann::json::parse(small.err)["error"] == "group_too_small");

    auto const dir = scratch("cli_err");
    {
        std::ofstream out(dir / "bad.ini");
        out << "[gp]\npopulation = many\n";
    }
    auto const config = cli({"--config", (dir / "bad.ini").string(), "advantages", "--rewards", "1,0"});
    CHECK(config.code == 1);
    CHECK(nlohmann::json::parse(config.err)["error"] == "config");

    auto const no_corpus = cli({"corpus", "stats", "--corpus", (dir / "missing").string()});
    CHECK(nlohmann::json::parse(no_corpus.err)["error"] == "integrity");

    CHECK(cli({"--help"}).code == 0);
}
