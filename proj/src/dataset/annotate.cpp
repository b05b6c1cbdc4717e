#include "physsym/dataset.hpp"

#include "prompts.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>
#include <thread>

namespace physsym {

namespace {

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

struct Features {
    double early_amplitude = 0.0;
    double late_amplitude = 0.0;
    double x_lo = 0.0, x_hi = 0.0, v_lo = 0.0, v_hi = 0.0;
    int zero_crossings = 0;
    double span = 0.0;
};

Features features_of(const Trajectory& traj)
{
    Features f;
    std::size_t const n = traj.size();
    if (n == 0) {
        return f;
    }
    std::size_t const quarter = std::max<std::size_t>(1, n / 4);
    for (std::size_t i = 0; i < quarter; ++i) {
        f.early_amplitude = std::max(f.early_amplitude, std::abs(traj.x[i]));
        f.late_amplitude = std::max(f.late_amplitude, std::abs(traj.x[n - 1 - i]));
    }
    auto [xl, xh] = std::minmax_element(traj.x.begin(), traj.x.end());
    auto [vl, vh] = std::minmax_element(traj.v.begin(), traj.v.end());
    f.x_lo = *xl;
    f.x_hi = *xh;
    f.v_lo = *vl;
    f.v_hi = *vh;
    for (std::size_t i = 1; i < n; ++i) {
        if ((traj.x[i - 1] < 0.0) != (traj.x[i] < 0.0)) {
            ++f.zero_crossings;
        }
    }
    f.span = traj.t.back() - traj.t.front();
    return f;
}

struct TermText {
    std::string_view interpretation;
    std::string_view signature;
};

// Keyed by term id. Each text names its category's keywords and no others.
const std::map<std::string, TermText, std::less<>>& term_texts()
{
    static const std::map<std::string, TermText, std::less<>> texts{
        {"linear",
         {"A linear restoring force pulls the state back toward x = 0 and sets up the basic oscillation about the "
          "origin.",
          "is the linear restoring force; it fixes the small-amplitude angular frequency near {freq}."}},
        {"cubic",
         {"A cubic stiffness makes the restoring force grow faster than proportionally at large |x|, so the period "
          "depends on the amplitude.",
          "is a cubic stiffness; it flattens the turning points of the time series and squares off the phase "
          "orbit at large |x|."}},
        {"quintic",
         {"A quintic stiffness is negligible near the origin but stiffens the motion sharply at large "
          "displacement.",
          "is a quintic stiffness; its effect is confined to the outermost excursions of the orbit."}},
        {"linear_damping",
         {"Linear damping removes energy at a rate proportional to the velocity.",
          "is linear damping; it produces a roughly exponential envelope and an inward spiral in the phase "
          "portrait."}},
        {"cubic_damping",
         {"Cubic damping dissipates energy mostly at high speed, so large swings shrink quickly while small ones "
          "persist.",
          "is cubic damping; the envelope falls fast at first and then levels off."}},
        {"quintic_damping",
         {"Quintic damping acts only near the highest speeds and trims the fastest part of each cycle.",
          "is quintic damping; it clips the velocity peaks of the phase orbit."}},
        {"forcing_time",
         {"A periodic forcing drives the motion at its own frequency, independent of the state.",
          "is a periodic forcing with period {period}; its time series signature is an oscillation that keeps "
          "going at the driving period instead of dying out."}},
        {"forcing_space",
         {"A position-dependent forcing varies sinusoidally with x and reshapes the force field in space.",
          "is a position-dependent forcing with spatial period {period}; it distorts the phase orbit where the "
          "sinusoid changes sign."}},
        {"coupling",
         {"A position-velocity coupling mixes x and v, so the effective friction changes sign with the position.",
          "is a position-velocity coupling; it makes the phase orbit lopsided between the two sides of x = 0."}},
        {"trig_xcos",
         {"A trigonometric stiffness modulates the restoring force by a cosine of x.",
          "is a trigonometric stiffness; it weakens and can reverse the restoring force near |x| = pi/2."}},
        {"trig_xsin",
         {"A trigonometric stiffness modulates the restoring force by a sine of x.",
          "is a trigonometric stiffness; it adds a restoring contribution that grows like x^2 near the origin."}},
        {"noise",
         {"Stochastic forcing adds random kicks to the acceleration.",
          "is stochastic forcing; it shows up as fine jitter along the phase orbit and the time series."}},
    };
    return texts;
}

std::string replace_all(std::string s, std::string_view key, const std::string& value)
{
    for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size())) {
        s.replace(pos, key.size(), value);
    }
    return s;
}

bool has_any(const std::vector<std::string>& categories, std::initializer_list<std::string_view> wanted)
{
    return std::any_of(categories.begin(), categories.end(), [&](const std::string& c) {
        return std::find(wanted.begin(), wanted.end(), c) != wanted.end();
    });
}

}  // namespace

const std::vector<KeywordRule>& keyword_rules()
{
    static const std::vector<KeywordRule> rules{
        {"linear", {"linear restoring force"}},
        {"cubic", {"cubic stiffness"}},
        {"quintic", {"quintic stiffness"}},
        {"linear_damping", {"linear damping"}},
        {"cubic_damping", {"cubic damping"}},
        {"quintic_damping", {"quintic damping"}},
        {"forcing_time", {"periodic forcing", "time series"}},
        {"forcing_space", {"position-dependent forcing"}},
        {"coupling", {"position-velocity coupling"}},
        {"trig", {"trigonometric stiffness"}},
        {"noise", {"stochastic forcing"}},
    };
    return rules;
}

KeywordReport check_keywords(std::string_view text, const std::vector<std::string>& present_categories)
{
    std::string const low = lower(text);
    KeywordReport report;
    for (const auto& rule : keyword_rules()) {
        bool const present =
            std::find(present_categories.begin(), present_categories.end(), rule.category) != present_categories.end();
        if (present) {
            for (const auto& k : rule.keywords) {
                if (low.find(k) == std::string::npos) {
                    report.missing.push_back(rule.category + ": " + k);
                }
            }
        } else if (low.find(rule.keywords.front()) != std::string::npos) {
            report.spurious.push_back(rule.category + ": " + rule.keywords.front());
        }
    }
    return report;
}

std::string annotate_template(const GeneratedSystem& system, const Trajectory& traj)
{
    Features const f = features_of(traj);
    std::vector<std::string> categories;
    for (const auto& id : system.term_ids) {
        categories.push_back(lookup(id).category);
    }

    double const ratio = f.early_amplitude > 0.0 ? f.late_amplitude / f.early_amplitude : 1.0;
    std::ostringstream out;

    out << "Visual pattern recognition: ";
    if (ratio < 0.85) {
        out << "The phase portrait is an inward spiral";
    } else if (ratio > 1.15) {
        out << "The phase portrait spirals outward";
    } else {
        out << "The phase portrait traces closed or nearly closed loops";
    }
    out << ", spanning x in [" << num(f.x_lo) << ", " << num(f.x_hi) << "] and v in [" << num(f.v_lo) << ", "
        << num(f.v_hi) << "]. ";
    if (f.zero_crossings >= 2) {
        out << "The position crosses zero " << f.zero_crossings << " times in " << num(f.span)
            << " s, a mean period of about " << num(2.0 * f.span / f.zero_crossings) << " s. ";
    } else {
        out << "The position does not complete a full oscillation in " << num(f.span) << " s. ";
    }
    if (ratio < 0.85) {
        out << "The oscillation envelope shrinks from " << num(f.early_amplitude) << " to " << num(f.late_amplitude)
            << ".\n\n";
    } else if (ratio > 1.15) {
        out << "The oscillation envelope grows from " << num(f.early_amplitude) << " to " << num(f.late_amplitude)
            << ".\n\n";
    } else {
        out << "The oscillation envelope stays near " << num(f.late_amplitude) << ".\n\n";
    }

    out << "Physical interpretation:";
    for (const auto& id : system.term_ids) {
        out << ' ' << term_texts().at(id).interpretation;
    }
    out << "\n\nTerm-by-term analysis:";
    for (const auto& id : system.term_ids) {
        const auto& spec = lookup(id);
        std::map<std::string, Expr> bound;
        for (const auto& [name, range] : spec.param_ranges) {
            bound.emplace(name, constant(std::stod(num(system.parameter_values.at(name)))));
        }
        std::string signature(term_texts().at(id).signature);
        if (id == "linear") {
            signature = replace_all(signature, "{freq}", num(std::sqrt(system.parameter_values.at("k"))));
        } else if (id == "forcing_time") {
            signature = replace_all(signature, "{period}", num(2.0 * std::numbers::pi / system.parameter_values.at("w")));
        } else if (id == "forcing_space") {
            signature = replace_all(signature, "{period}", num(2.0 * std::numbers::pi / system.parameter_values.at("wx")));
        }
        out << " The term " << render(canonicalize(substitute(spec.symbolic, bound))) << ' ' << signature;
    }

    out << "\n\nHypothesis formation: The plots alone point to " << system.term_ids.size()
        << " contributions, one per mechanism above, which gives the candidate structure a = "
        << render(system.formula_symbolic) << ".\n\n";

    out << "Validation logic: ";
    bool const dissipative = has_any(categories, {"linear_damping", "cubic_damping", "quintic_damping"});
    if (dissipative && ratio < 0.85) {
        out << "The shrinking envelope agrees with the dissipative terms. ";
    } else if (dissipative) {
        out << "The dissipative terms are weak relative to the other forces over this window, which is why the "
               "envelope barely shrinks. ";
    } else if (ratio < 0.85 || ratio > 1.15) {
        out << "With no explicit dissipation, the changing envelope is attributed to the remaining nonlinear "
               "terms. ";
    } else {
        out << "The persistent amplitude agrees with the absence of explicit dissipation. ";
    }
    out << "Each term accounts for a visible feature, and no further term is needed to explain the plots.";
    return out.str();
}

std::string annotation_prompt(const GeneratedSystem& system)
{
    return replace_all(std::string(prompts::annotator), "{formula}", render(system.formula));
}

std::string annotate_external(const AnnotatorConfig& config, const std::string& prompt,
                              const std::vector<fs::path>& image_paths)
{
    const char* key = std::getenv(config.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw AuthError("no credential in environment variable " + config.api_key_env);
    }
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config.endpoint, m, url_re)) {
        throw NetworkError("invalid endpoint URL '" + config.endpoint + "'");
    }
    std::string const base = m[1];
    std::string const path = m[2].matched ? std::string(m[2]) : "/";

    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    for (const auto& p : image_paths) {
        std::ifstream in(p, std::ios::binary);
        if (!in) {
            throw std::runtime_error("cannot read image " + p.string());
        }
        std::string const bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        content.push_back(
            {{"type", "image_url"},
             {"image_url", {{"url", "data:image/png;base64," + httplib::detail::base64_encode(bytes)}}}});
    }
    nlohmann::json const body{{"model", config.model},
                              {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
    std::string const payload = body.dump();

    httplib::Client client(base);
    auto const seconds = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    auto const micros = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    httplib::Headers const headers{{"Authorization", std::string("Bearer ") + key}};

    auto backoff = config.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            throw NetworkError("request to " + config.endpoint + " failed: " + httplib::to_string(res.error()));
        }
        if (res->status == 401 || res->status == 403) {
            throw AuthError("endpoint rejected the credential (HTTP " + std::to_string(res->status) + ")");
        }
        if (res->status == 429) {
            if (attempt >= config.max_attempts) {
                throw RateLimited("still rate limited after " + std::to_string(attempt) + " attempts");
            }
            auto wait = backoff;
            if (res->has_header("Retry-After")) {
                try {
                    wait = std::chrono::seconds(std::stoi(res->get_header_value("Retry-After")));
                } catch (const std::exception&) {
                    // HTTP-date form: keep the exponential schedule
                }
            }
            std::this_thread::sleep_for(wait);
            backoff *= 2;
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            throw NetworkError("endpoint returned HTTP " + std::to_string(res->status));
        }
        auto const reply = nlohmann::json::parse(res->body, nullptr, false);
        if (reply.is_discarded()) {
            throw MalformedResponse("response body is not JSON");
        }
        auto const ptr = nlohmann::json::json_pointer("/choices/0/message/content");
        if (!reply.contains(ptr)) {
            throw MalformedResponse("response has no choices[0].message.content");
        }
        const auto& c = reply.at(ptr);
        std::string text;
        if (c.is_string()) {
            text = c.get<std::string>();
        } else if (c.is_array()) {
            for (const auto& part : c) {
                if (part.is_object() && part.value("type", "") == "text" && part.contains("text") &&
                    part["text"].is_string()) {
                    text += part["text"].get<std::string>();
                }
            }
        }
        if (std::all_of(text.begin(), text.end(), [](unsigned char ch) { return std::isspace(ch); })) {
            throw MalformedResponse("response content is empty");
        }
        return text;
    }
}

}  // namespace physsym
