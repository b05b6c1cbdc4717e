#include "physsym/eval.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>

namespace physsym {

namespace {

std::string trim(std::string_view s)
{
    auto const b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) {
        return {};
    }
    return std::string(s.substr(b, s.find_last_not_of(" \t") - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        auto const end = std::min(s.find(sep, pos), s.size());
        if (auto item = trim(s.substr(pos, end - pos)); !item.empty()) {
            out.push_back(std::move(item));
        }
        pos = end + 1;
    }
    return out;
}

template <class T>
T number(const std::string& key, const std::string& text)
{
    T value{};
    auto const t = trim(text);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError("invalid value '" + text + "' for " + key);
    }
    return value;
}

bool boolean(const std::string& key, const std::string& text)
{
    auto const t = trim(text);
    if (t == "true" || t == "yes" || t == "on" || t == "1") {
        return true;
    }
    if (t == "false" || t == "no" || t == "off" || t == "0") {
        return false;
    }
    throw ConfigError("invalid boolean '" + text + "' for " + key);
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;

template <class T>
Setter set_num(T& target)
{
    return [&target](const std::string& k, const std::string& v) { target = number<T>(k, v); };
}

Setter set_bool(bool& target)
{
    return [&target](const std::string& k, const std::string& v) { target = boolean(k, v); };
}

Setter set_ms(std::chrono::milliseconds& target)
{
    return [&target](const std::string& k, const std::string& v) {
        target = std::chrono::milliseconds(number<long long>(k, v));
    };
}

}  // namespace

AppConfig parse_config(std::istream& in)
{
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax: ") + e.what());
    }

    AppConfig cfg;
    auto& b = cfg.build;
    AnnotatorConfig annotator;
    bool annotate = false;

    std::map<std::string, std::map<std::string, Setter>> const schema{
        {"sampler",
         {{"term_count_weights",
           [&](const std::string& k, const std::string& v) {
               b.sampler.term_count_weights.clear();
               for (const auto& item : split(v, ',')) {
                   auto const colon = item.find(':');
                   if (colon == std::string::npos) {
                       throw ConfigError("expected count:weight in " + k);
                   }
                   b.sampler.term_count_weights[number<int>(k, item.substr(0, colon))] =
                       number<double>(k, item.substr(colon + 1));
               }
           }},
          {"disabled_categories",
           [&](const std::string&, const std::string& v) {
               for (const auto& c : split(v, ',')) {
                   if (std::find(categories().begin(), categories().end(), c) == categories().end()) {
                       throw ConfigError("unknown category '" + c + "'");
                   }
                   b.sampler.category_enabled[c] = false;
               }
           }}}},
        {"sim",
         {{"t_end", set_num(b.sim.t_end)},
          {"n_points", set_num(b.sim.n_points)},
          {"rtol", set_num(b.sim.rtol)},
          {"atol", set_num(b.sim.atol)},
          {"initial_step", set_num(b.sim.initial_step)},
          {"noise_dt", set_num(b.sim.noise_dt)},
          {"divergence_threshold", set_num(b.sim.divergence_threshold)},
          {"max_steps", set_num(b.sim.max_steps)}}},
        {"plot",
         {{"dpi", set_num(b.plot.dpi)},
          {"width_in", set_num(b.plot.width_in)},
          {"height_in", set_num(b.plot.height_in)},
          {"line_width_pt", set_num(b.plot.line_width_pt)},
          {"grid", set_bool(b.plot.grid)}}},
        {"build",
         {{"csv_points", set_num(b.csv_points)}, {"max_retries", set_num(b.max_retries)}, {"workers", set_num(b.workers)}}},
        {"annotator",
         {{"endpoint",
           [&](const std::string&, const std::string& v) {
               annotator.endpoint = trim(v);
               annotate = !annotator.endpoint.empty();
           }},
          {"model", [&](const std::string&, const std::string& v) { annotator.model = trim(v); }},
          {"api_key_env", [&](const std::string&, const std::string& v) { annotator.api_key_env = trim(v); }},
          {"timeout_ms", set_ms(annotator.timeout)},
          {"max_attempts", set_num(annotator.max_attempts)},
          {"initial_backoff_ms", set_ms(annotator.initial_backoff)},
          {"fallback", set_bool(annotator.fallback_to_template)}}},
        {"reward",
         {{"format", set_num(cfg.weights.format)},
          {"structural", set_num(cfg.weights.structural)},
          {"accuracy", set_num(cfg.weights.accuracy)}}},
        {"gp",
         {{"population", set_num(cfg.gp.population)},
          {"generations", set_num(cfg.gp.generations)},
          {"tournament", set_num(cfg.gp.tournament)},
          {"p_crossover", set_num(cfg.gp.p_crossover)},
          {"p_subtree_mutation", set_num(cfg.gp.p_subtree_mutation)},
          {"p_point_mutation", set_num(cfg.gp.p_point_mutation)},
          {"p_constant_jitter", set_num(cfg.gp.p_constant_jitter)},
          {"max_depth", set_num(cfg.gp.max_depth)},
          {"max_nodes", set_num(cfg.gp.max_nodes)},
          {"init_min_depth", set_num(cfg.gp.init_min_depth)},
          {"init_max_depth", set_num(cfg.gp.init_max_depth)},
          {"use_sin", set_bool(cfg.gp.use_sin)},
          {"use_cos", set_bool(cfg.gp.use_cos)},
          {"use_cube", set_bool(cfg.gp.use_cube)},
          {"use_quintic", set_bool(cfg.gp.use_quintic)},
          {"parsimony", [&](const std::string& k, const std::string& v) { cfg.gp.parsimony = number<double>(k, v); }},
          {"optimize_top", set_num(cfg.gp.optimize_top)},
          {"optimize_periodic", set_num(cfg.gp.optimize_periodic)},
          {"seed", set_num(cfg.gp.seed)}}},
        {"fit",
         {{"strict", set_bool(cfg.fit.strict)},
          {"max_nonlinear", set_num(cfg.fit.max_nonlinear)},
          {"grid_budget", set_num(cfg.fit.grid_budget)}}},
        {"paths",
         {{"corpus", [&](const std::string&, const std::string& v) { cfg.corpus_dir = trim(v); }},
          {"output", [&](const std::string&, const std::string& v) { cfg.output_dir = trim(v); }}}},
    };

    for (const auto& [section, entries] : tree) {
        auto const s = schema.find(section);
        if (s == schema.end()) {
            throw ConfigError(entries.empty() ? "top-level key '" + section + "' outside a section"
                                              : "unknown config section [" + section + "]");
        }
        for (const auto& [key, value] : entries) {
            auto const setter = s->second.find(key);
            if (setter == s->second.end()) {
                throw ConfigError("unknown key '" + key + "' in [" + section + "]");
            }
            setter->second(section + "." + key, value.data());
        }
    }
    if (annotate) {
        b.annotator = annotator;
    }
    b.sampler.validate();
    cfg.gp.validate();
    try {
        cfg.weights.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

AppConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    return parse_config(in);
}

}  // namespace physsym
