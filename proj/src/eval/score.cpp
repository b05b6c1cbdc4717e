#include "physsym/eval.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace physsym {

namespace {

std::optional<std::string> optional_string(const nlohmann::json& j, const char* key, std::size_t line)
{
    if (!j.contains(key) || j[key].is_null()) {
        return std::nullopt;
    }
    if (!j[key].is_string()) {
        throw SubmissionError("line " + std::to_string(line) + ": \"" + key + "\" must be a string");
    }
    return j[key].get<std::string>();
}

ReportRow score_row(const Submission& sub, const Instance& inst, const fs::path& root, const ScoreOptions& options,
                    std::size_t index)
{
    auto const start = std::chrono::steady_clock::now();
    ReportRow row;
    row.instance_id = sub.instance_id;

    Expr candidate;
    try {
        candidate = sub.response_text ? extract_answer(*sub.response_text) : parse(*sub.formula_text);
        row.parse_ok = true;
        row.candidate = render(candidate);
    } catch (const std::exception& e) {
        row.note = std::string("unparsed: ") + e.what();
    }

    if (row.parse_ok) {
        bool const symbolic = !parameters_of(candidate).empty();
        Expr const gt = parse(symbolic ? inst.formula_symbolic : inst.formula_text);
        row.structural = structural_reward(candidate, gt);
        row.accuracy = accuracy_reward(candidate, gt);
    }

    if (options.run_sr2) {
        auto const traj = import_csv(root / inst.trajectory_csv);
        GPConfig gp = options.gp;
        gp.seed = derive_seed(options.gp.seed, index);
        RefineResult result;
        try {
            result = refine(row.parse_ok ? candidate : constant(0.0), traj, gp, options.fit);
        } catch (const std::exception& e) {
            row.note += (row.note.empty() ? "" : "; ") + std::string("fit failed, using zero ansatz: ") + e.what();
            result = refine(constant(0.0), traj, gp, options.fit);
        }
        row.pre_mse = result.ansatz_mse;
        row.post_mse = result.final_mse;
        row.final_formula = render(result.final_expr);
    }
    if (options.timing) {
        row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return row;
}

std::string fmt_mse(const std::optional<double>& v)
{
    if (!v) {
        return "-";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", *v);
    return buf;
}

}  // namespace

std::vector<Submission> read_submissions(std::istream& in)
{
    std::vector<Submission> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        auto const j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw SubmissionError("line " + std::to_string(n) + ": not a JSON object");
        }
        if (!j.contains("instance_id") || !j["instance_id"].is_string()) {
            throw SubmissionError("line " + std::to_string(n) + ": missing string \"instance_id\"");
        }
        Submission s;
        s.instance_id = j["instance_id"].get<std::string>();
        s.response_text = optional_string(j, "response_text", n);
        s.formula_text = optional_string(j, "formula_text", n);
        if (s.response_text.has_value() == s.formula_text.has_value()) {
            throw SubmissionError("line " + std::to_string(n) +
                                  ": exactly one of \"response_text\" and \"formula_text\" is required");
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Submission> read_submissions(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw SubmissionError("cannot open " + path.string());
    }
    return read_submissions(in);
}

Report score_submission(const std::vector<Submission>& submissions, const Corpus& corpus, const ScoreOptions& options)
{
    std::map<std::string, const Instance*> by_id;
    for (const auto& inst : corpus.instances) {
        by_id.emplace(inst.id, &inst);
    }
    std::vector<const Instance*> targets;
    for (const auto& s : submissions) {
        auto it = by_id.find(s.instance_id);
        if (it == by_id.end()) {
            throw UnknownInstance("no instance '" + s.instance_id + "' in the corpus");
        }
        targets.push_back(it->second);
    }

    Report report;
    report.options = options;
    report.rows.resize(submissions.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < submissions.size(); i = next++) {
            try {
                report.rows[i] = score_row(submissions[i], *targets[i], corpus.root, options, i);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < std::max(1u, options.workers); ++w) {
            pool.emplace_back(work);
        }
        work();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    double structural = 0.0, accuracy = 0.0, pre = 0.0, post = 0.0;
    std::size_t with_sr2 = 0;
    for (const auto& row : report.rows) {
        structural += row.structural;
        accuracy += row.accuracy;
        if (row.post_mse) {
            pre += *row.pre_mse;
            post += *row.post_mse;
            ++with_sr2;
        }
    }
    if (!report.rows.empty()) {
        auto const n = static_cast<double>(report.rows.size());
        report.mean_structural = structural / n;
        report.accuracy_rate = accuracy / n;
    }
    if (with_sr2 > 0) {
        report.mean_pre_mse = pre / static_cast<double>(with_sr2);
        report.mean_post_mse = post / static_cast<double>(with_sr2);
    }
    return report;
}

nlohmann::json to_json(const Report& report)
{
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json row{{"instance_id", r.instance_id}, {"parse_ok", r.parse_ok},   {"candidate", r.candidate},
                           {"S_struct", r.structural},     {"S_acc", r.accuracy},      {"pre_mse", opt(r.pre_mse)},
                           {"post_mse", opt(r.post_mse)},  {"final", r.final_formula}, {"note", r.note}};
        if (r.runtime_s) {
            row["runtime_s"] = *r.runtime_s;
        }
        rows.push_back(std::move(row));
    }
    const auto& o = report.options;
    nlohmann::json config{{"run_sr2", o.run_sr2}, {"workers", o.workers}};
    if (o.run_sr2) {
        config["gp"] = {{"population", o.gp.population}, {"generations", o.gp.generations},
                        {"tournament", o.gp.tournament}, {"max_depth", o.gp.max_depth},
                        {"max_nodes", o.gp.max_nodes},   {"seed", o.gp.seed}};
    }
    return {{"rows", rows},
            {"aggregate",
             {{"count", report.rows.size()},
              {"S_struct", report.mean_structural},
              {"S_acc", report.accuracy_rate},
              {"pre_mse", opt(report.mean_pre_mse)},
              {"post_mse", opt(report.mean_post_mse)}}},
            {"config", config}};
}

std::string to_table(const Report& report)
{
    std::size_t id_width = 8;
    for (const auto& r : report.rows) {
        id_width = std::max(id_width, r.instance_id.size());
    }
    bool const timed = !report.rows.empty() && report.rows.front().runtime_s.has_value();
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %5s  %8s  %5s  %10s  %10s", static_cast<int>(id_width), "instance", "parse",
                  "S_struct", "S_acc", "pre-MSE", "post-MSE");
    out << buf << (timed ? "  runtime_s" : "") << '\n';
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %5s  %8.4f  %5d  %10s  %10s", static_cast<int>(id_width),
                      r.instance_id.c_str(), r.parse_ok ? "ok" : "fail", r.structural, r.accuracy,
                      fmt_mse(r.pre_mse).c_str(), fmt_mse(r.post_mse).c_str());
        out << buf;
        if (r.runtime_s) {
            std::snprintf(buf, sizeof buf, "  %9.3f", *r.runtime_s);
            out << buf;
        }
        out << '\n';
    }
    std::snprintf(buf, sizeof buf, "%-*s  %5s  %8.4f  %5.3f  %10s  %10s", static_cast<int>(id_width), "mean", "",
                  report.mean_structural, report.accuracy_rate, fmt_mse(report.mean_pre_mse).c_str(),
                  fmt_mse(report.mean_post_mse).c_str());
    out << buf << '\n';
    return out.str();
}

nlohmann::json to_json(const RewardBreakdown& b)
{
    auto names = [](const std::set<SkeletonTerm>& s) {
        std::vector<std::string> out;
        for (const auto& t : s) {
            out.push_back(render(t));
        }
        return out;
    };
    return {{"format", b.format},
            {"structural", b.structural},
            {"accuracy", b.accuracy},
            {"composite", b.composite},
            {"answer_parsed", b.answer_parsed},
            {"gen_skeletons", names(b.gen_skeletons)},
            {"gt_skeletons", names(b.gt_skeletons)}};
}

}  // namespace physsym
