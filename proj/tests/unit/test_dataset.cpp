#include <doctest.h>

#include "physsym/dataset.hpp"
#include "physsym/reward.hpp"

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

using namespace physsym;

namespace {

fs::path scratch(const std::string& name)
{
    auto const dir = fs::temp_directory_path() / ("physsym_test_dataset_" + name);
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

BuildConfig quick_config()
{
    BuildConfig cfg;
    cfg.plot.dpi = 50;  // small images keep the tests fast
    cfg.workers = 1;
    return cfg;
}

GeneratedSystem system_with(const std::vector<std::string>& ids, std::uint64_t seed = 5)
{
    GeneratedSystem sys;
    Rng rng(seed);
    ExprList numeric, symbolic;
    for (const auto& id : ids) {
        auto const bound = instantiate_term(lookup(id), rng);
        sys.term_ids.push_back(id);
        sys.parameter_values.insert(bound.values.begin(), bound.values.end());
        numeric.push_back(bound.numeric);
        symbolic.push_back(bound.symbolic);
    }
    sys.formula = canonicalize(add(numeric));
    sys.formula_symbolic = canonicalize(add(symbolic));
    sys.x0 = 0.8;
    sys.v0 = 0.0;
    sys.seed = seed;
    return sys;
}

std::vector<std::string> categories_of(const GeneratedSystem& sys)
{
    std::vector<std::string> out;
    for (const auto& id : sys.term_ids) {
        out.push_back(lookup(id).category);
    }
    return out;
}

// Minimal chat-completion stand-in on an ephemeral port.
struct StubServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> requests{0};

    explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&, int)> handler)
    {
        server.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
            handler(req, res, ++requests);
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~StubServer()
    {
        server.stop();
        thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions"; }
};

std::string reply(const std::string& text)
{
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

AnnotatorConfig stub_config(const std::string& url)
{
    AnnotatorConfig cfg;
    cfg.endpoint = url;
    cfg.api_key_env = "PHYSSYM_TEST_ANNOTATOR_KEY";
    cfg.initial_backoff = std::chrono::milliseconds(20);
    cfg.timeout = std::chrono::milliseconds(5000);
    return cfg;
}

}  // namespace

TEST_CASE("build_instance produces a complete, constrained instance")
{
    auto const root = scratch("instance");
    auto const cfg = quick_config();
    auto const restoring = skeletonize(parse("-x"));
    for (std::size_t i = 0; i < 25; ++i) {
        auto const inst = build_instance(11, i, cfg, root);
        CAPTURE(inst.formula_text);
        CHECK(inst.id == instance_id(i));
        CHECK(inst.term_ids.size() >= 2);
        CHECK(inst.term_ids.size() <= 5);
        CHECK(skeleton_set(parse(inst.formula_text)).contains(restoring));
        CHECK(check_integrity(inst, root).empty());
        CHECK(import_csv(root / inst.trajectory_csv).size() == 100);
        CHECK(check_keywords(inst.cot_text, inst.term_categories).ok());
    }
}

TEST_CASE("build_instance is deterministic")
{
    auto const a = scratch("det_a");
    auto const b = scratch("det_b");
    auto const cfg = quick_config();
    auto const ia = build_instance(3, 17, cfg, a);
    auto const ib = build_instance(3, 17, cfg, b);
    CHECK(to_json(ia) == to_json(ib));
    CHECK(tree(a) == tree(b));
    CHECK(tree(a).size() == 3);
}

TEST_CASE("unstable draws are retried with derived seeds")
{
    auto const cfg = quick_config();
    // find an instance whose first draw leaves the stability box
    std::size_t index = 0;
    for (;; ++index) {
        REQUIRE(index < 2000);
        auto const sys = sample_formula(attempt_seed(0, index, 0), cfg.sampler);
        bool diverged = false;
        try {
            simulate(sys, cfg.sim);
        } catch (const Diverged&) {
            diverged = true;
        }
        if (diverged) {
            break;
        }
    }
    auto const root = scratch("retry");
    auto const inst = build_instance(0, index, cfg, root);
    CHECK(inst.retries >= 1);
    CHECK(inst.seed == attempt_seed(0, index, inst.retries));
    CHECK(check_integrity(inst, root).empty());

    BuildConfig hopeless = cfg;
    hopeless.sim.divergence_threshold = 1e-3;  // every initial condition is already outside
    hopeless.max_retries = 3;
    CHECK_THROWS_AS(build_instance(0, 0, hopeless, root), Unstable);
    CHECK_THROWS_AS(build_corpus(2, 0, hopeless, scratch("retry_corpus")), Unstable);
}

TEST_CASE("template annotation")
{
    auto const damped = system_with({"linear", "linear_damping"});
    auto const traj = simulate(damped);
    auto const text = annotate_template(damped, traj);
    CHECK(text.find("linear damping") != std::string::npos);
    CHECK(text == annotate_template(damped, traj));
    CHECK(check_keywords(text, categories_of(damped)).ok());
    for (const auto* stage : {"Visual pattern recognition:", "Physical interpretation:", "Term-by-term analysis:",
                              "Hypothesis formation:", "Validation logic:"}) {
        CHECK(text.find(stage) != std::string::npos);
    }
    CHECK(text.find("inward spiral") != std::string::npos);

    auto const forced = system_with({"linear", "forcing_time"});
    auto const ftext = annotate_template(forced, simulate(forced));
    CHECK(ftext.find("periodic forcing") != std::string::npos);
    CHECK(ftext.find("time series") != std::string::npos);
    CHECK(ftext.find("damping") == std::string::npos);

    // every generated system passes keyword validation
    SamplerConfig scfg;
    int checked = 0;
    for (std::uint64_t seed = 0; checked < 300; ++seed) {
        auto const sys = sample_formula(seed, scfg);
        Trajectory t;
        try {
            t = simulate(sys);
        } catch (const SimulationError&) {
            continue;
        }
        auto const report = check_keywords(annotate_template(sys, t), categories_of(sys));
        CAPTURE(render(sys.formula));
        REQUIRE(report.ok());
        ++checked;
    }
}

TEST_CASE("keyword check")
{
    auto const r = check_keywords("A linear restoring force and cubic damping.", {"linear"});
    CHECK(r.missing.empty());
    CHECK(r.spurious == std::vector<std::string>{"cubic_damping: cubic damping"});
    auto const m = check_keywords("Periodic forcing is present.", {"linear", "forcing_time"});
    CHECK(m.missing == std::vector<std::string>{"linear: linear restoring force", "forcing_time: time series"});
    CHECK(check_keywords("STOCHASTIC FORCING", {"noise"}).ok());
    CHECK(keyword_rules().size() == categories().size());
}

TEST_CASE("external annotation against a stub endpoint")
{
    auto const image_dir = scratch("external");
    auto const traj = simulate(parse("-x"), 1.0, 0.0, 0);
    PlotStyle style;
    style.dpi = 30;
    auto const images = write_instance_plots("img", traj, image_dir, style);
    std::vector<fs::path> const paths{images[0], images[1]};

    SUBCASE("missing credential fails before any request")
    {
        StubServer stub([](const auto&, auto& res, int) { res.set_content(reply("x"), "application/json"); });
        auto cfg = stub_config(stub.url());
        cfg.api_key_env = "PHYSSYM_TEST_UNSET_KEY";
        ::unsetenv("PHYSSYM_TEST_UNSET_KEY");
        CHECK_THROWS_AS(annotate_external(cfg, "p", paths), AuthError);
        CHECK(stub.requests == 0);
    }

    ::setenv("PHYSSYM_TEST_ANNOTATOR_KEY", "secret", 1);

    SUBCASE("request shape")
    {
        std::string auth;
        nlohmann::json body;
        StubServer stub([&](const httplib::Request& req, httplib::Response& res, int) {
            auth = req.get_header_value("Authorization");
            body = nlohmann::json::parse(req.body);
            res.set_content(reply("analysis text"), "application/json");
        });
        CHECK(annotate_external(stub_config(stub.url()), "the prompt", paths) == "analysis text");
        CHECK(auth == "Bearer secret");
        auto const& content = body["messages"][0]["content"];
        REQUIRE(content.size() == 3);
        CHECK(content[0]["text"] == "the prompt");
        std::string const url = content[1]["image_url"]["url"];
        CHECK(url.rfind("data:image/png;base64,iVBORw0KGgo", 0) == 0);
    }

    SUBCASE("429 then 200 succeeds after one backoff")
    {
        StubServer stub([](const auto&, httplib::Response& res, int n) {
            if (n == 1) {
                res.status = 429;
            } else {
                res.set_content(reply("ok"), "application/json");
            }
        });
        auto const start = std::chrono::steady_clock::now();
        CHECK(annotate_external(stub_config(stub.url()), "p", paths) == "ok");
        CHECK(stub.requests == 2);
        CHECK(std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(20));
    }

    SUBCASE("persistent 429 gives up")
    {
        StubServer stub([](const auto&, httplib::Response& res, int) { res.status = 429; });
        auto cfg = stub_config(stub.url());
        cfg.max_attempts = 3;
        CHECK_THROWS_AS(annotate_external(cfg, "p", paths), RateLimited);
        CHECK(stub.requests == 3);
    }

    SUBCASE("error statuses and bodies")
    {
        StubServer stub([](const httplib::Request& req, httplib::Response& res, int) {
            std::string const mode = nlohmann::json::parse(req.body)["messages"][0]["content"][0]["text"];
            if (mode == "401") {
                res.status = 401;
            } else if (mode == "500") {
                res.status = 500;
            } else if (mode == "garbage") {
                res.set_content("not json", "text/plain");
            } else if (mode == "shape") {
                res.set_content(R"({"choices": []})", "application/json");
            } else {
                res.set_content(reply("   "), "application/json");
            }
        });
        auto const cfg = stub_config(stub.url());
        CHECK_THROWS_AS(annotate_external(cfg, "401", paths), AuthError);
        CHECK_THROWS_AS(annotate_external(cfg, "500", paths), NetworkError);
        CHECK_THROWS_AS(annotate_external(cfg, "garbage", paths), MalformedResponse);
        CHECK_THROWS_AS(annotate_external(cfg, "shape", paths), MalformedResponse);
        CHECK_THROWS_AS(annotate_external(cfg, "empty", paths), MalformedResponse);
    }

    SUBCASE("unreachable endpoint")
    {
        int port = 0;
        {
            StubServer stub([](const auto&, auto&, int) {});
            port = stub.port;
        }
        auto const url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
        CHECK_THROWS_AS(annotate_external(stub_config(url), "p", paths), NetworkError);
        CHECK_THROWS_AS(annotate_external(stub_config("not a url"), "p", paths), NetworkError);

        auto const root = scratch("fallback");
        auto cfg = quick_config();
        cfg.annotator = stub_config(url);
        auto const inst = build_instance(1, 0, cfg, root);
        CHECK(inst.annotation_fallback);
        CHECK(inst.cot_source == CotSource::Template);
        CHECK(check_keywords(inst.cot_text, inst.term_categories).ok());

        cfg.annotator->fallback_to_template = false;
        CHECK_THROWS_AS(build_instance(1, 0, cfg, root), NetworkError);
    }

    SUBCASE("external text is recorded with its provenance")
    {
        StubServer stub([](const httplib::Request& req, httplib::Response& res, int) {
            std::string const prompt = nlohmann::json::parse(req.body)["messages"][0]["content"][0]["text"];
            res.set_content(reply(prompt.find("a = ") != std::string::npos ? "external analysis" : "?"),
                            "application/json");
        });
        auto const root = scratch("external_build");
        auto cfg = quick_config();
        cfg.annotator = stub_config(stub.url());
        auto const inst = build_instance(1, 0, cfg, root);
        CHECK(inst.cot_source == CotSource::External);
        CHECK_FALSE(inst.annotation_fallback);
        CHECK(inst.cot_text == "external analysis");
    }
}

TEST_CASE("assemble stage variants")
{
    auto const root = scratch("assemble");
    auto const cfg = quick_config();
    std::vector<Instance> instances;
    for (std::size_t i = 0; i < 6; ++i) {
        instances.push_back(build_instance(2, i, cfg, root));
    }
    auto const joint = assemble(instances, StageVariant::MsiJoint, root);
    auto const guided = assemble(instances, StageVariant::MsiGuided, root);
    auto const rgsc = assemble(instances, StageVariant::Rgsc, root);
    REQUIRE(joint["records"].size() == 6);
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        const auto& j = joint["records"][i];
        const auto& g = guided["records"][i];
        const auto& r = rgsc["records"][i];

        std::string const jt = j["target"];
        CHECK(jt.find(inst.cot_text) != std::string::npos);
        CHECK(jt.find("<answer>" + inst.formula_text + "</answer>") != std::string::npos);
        CHECK(std::string(j["input"]).find(inst.cot_text) == std::string::npos);

        CHECK(std::string(g["input"]).find(inst.cot_text) != std::string::npos);
        CHECK(std::string(g["target"]).find(inst.cot_text) == std::string::npos);
        CHECK(g["target"] == "<answer>" + inst.formula_text + "</answer>");

        std::string const rt = r["target"];
        CHECK(rt.find(inst.cot_text) == std::string::npos);
        Expr const answer = extract_answer(rt);
        CHECK_FALSE(parameters_of(answer).empty());
        CHECK(answer == parse(inst.formula_symbolic));
        // only structural constants survive: unit signs
        std::function<void(const Expr&)> walk = [&](const Expr& e) {
            if (e.is(Kind::Constant)) {
                CHECK(std::abs(e.value()) == 1.0);
            }
            for (const auto& c : e.children()) {
                walk(c);
            }
        };
        walk(answer);

        CHECK(j["images"][0] == inst.phase_png.generic_string());
        CHECK(r["meta"]["categories"] == inst.term_categories);
        CHECK(r["prompt"] == system_prompt(StageVariant::Rgsc));
        CHECK(r["variant"] == "RGSC");
    }
    CHECK(system_prompt(StageVariant::Rgsc).find("placeholder") != std::string::npos);
    CHECK(system_prompt(StageVariant::MsiGuided) != system_prompt(StageVariant::MsiJoint));

    auto const empty = assemble({}, StageVariant::MsiJoint, root);
    CHECK(empty["count"] == 0);
    CHECK(empty["records"].is_array());
    CHECK(empty["variant"] == "MSI_JOINT");

    fs::remove(root / instances[2].traj_png);
    CHECK_THROWS_AS(assemble(instances, StageVariant::Rgsc, root), IntegrityError);

    CHECK(parse_variant("msi-guided") == StageVariant::MsiGuided);
    CHECK_THROWS_AS(parse_variant("stage4"), std::invalid_argument);
}

TEST_CASE("corpus build, reload and statistics")
{
    auto cfg = quick_config();
    auto const a = scratch("corpus_a");
    auto const b = scratch("corpus_b");
    auto const corpus = build_corpus(30, 7, cfg, a);
    cfg.workers = 3;
    build_corpus(30, 7, cfg, b);
    CHECK(tree(a) == tree(b));
    CHECK(fs::exists(a / "manifest.json"));
    for (auto const v : {StageVariant::MsiJoint, StageVariant::MsiGuided, StageVariant::Rgsc}) {
        CHECK(fs::exists(a / dataset_file_name(v)));
    }

    auto const loaded = load_corpus(a);
    REQUIRE(loaded.instances.size() == 30);
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(to_json(loaded.instances[i]) == to_json(corpus.instances[i]));
    }

    auto const stats = corpus_stats(loaded);
    CHECK(stats.integrity_failures == 0);
    CHECK(stats.keyword_failures == 0);
    CHECK(stats.parameters_out_of_range == 0);
    std::size_t terms = 0, hist = 0;
    for (const auto& inst : loaded.instances) {
        terms += inst.term_ids.size();
    }
    for (const auto& [k, v] : stats.term_count_histogram) {
        hist += v;
    }
    CHECK(hist == 30);
    CHECK(stats.mean_term_count == doctest::Approx(static_cast<double>(terms) / 30.0).epsilon(1e-15));
    CHECK(stats.category_fraction.at("linear") == 1.0);

    // tampering is caught
    {
        std::ofstream out(a / loaded.instances[4].trajectory_csv, std::ios::app);
        out << "30,0,0,0\n";
    }
    fs::remove(a / loaded.instances[9].phase_png);
    auto const broken = corpus_stats(loaded);
    CHECK(broken.integrity_failures == 2);
    CHECK_THROWS_AS(load_corpus(scratch("no_manifest")), IntegrityError);
}
