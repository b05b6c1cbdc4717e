#include "physsym/dataset.hpp"

#include "prompts.hpp"

#include <algorithm>
#include <cctype>

namespace physsym {

namespace {

constexpr std::string_view kUserRequest =
    "The attached images show the phase portrait (v against x) and the position time series of a "
    "one-dimensional system; the trajectory file lists t, x, v and a. Determine the governing equation "
    "a = f(x, v, t).";

std::string think_block(const std::string& cot) { return "<think>\n" + cot + "\n</think>"; }
std::string answer_block(const std::string& formula) { return "<answer>" + formula + "</answer>"; }

}  // namespace

std::string_view variant_name(StageVariant v)
{
    switch (v) {
    case StageVariant::MsiJoint: return "MSI_JOINT";
    case StageVariant::MsiGuided: return "MSI_GUIDED";
    case StageVariant::Rgsc: return "RGSC";
    }
    return "";
}

StageVariant parse_variant(std::string_view name)
{
    std::string norm;
    for (char c : name) {
        norm += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    for (auto const v : {StageVariant::MsiJoint, StageVariant::MsiGuided, StageVariant::Rgsc}) {
        if (norm == variant_name(v)) {
            return v;
        }
    }
    throw std::invalid_argument("unknown dataset variant '" + std::string(name) + "'");
}

const std::string& system_prompt(StageVariant v)
{
    static const std::string joint(prompts::msi_joint);
    static const std::string guided(prompts::msi_guided);
    static const std::string rgsc(prompts::rgsc);
    switch (v) {
    case StageVariant::MsiJoint: return joint;
    case StageVariant::MsiGuided: return guided;
    case StageVariant::Rgsc: break;
    }
    return rgsc;
}

fs::path dataset_file_name(StageVariant v)
{
    std::string name(variant_name(v));
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return "dataset_" + name + ".json";
}

nlohmann::json assemble(const std::vector<Instance>& instances, StageVariant variant, const fs::path& root)
{
    nlohmann::json records = nlohmann::json::array();
    for (const auto& inst : instances) {
        for (const auto& rel : {inst.phase_png, inst.traj_png, inst.trajectory_csv}) {
            if (!fs::is_regular_file(root / rel)) {
                throw IntegrityError("instance " + inst.id + ": missing file " + rel.generic_string());
            }
        }
        std::string input(kUserRequest);
        std::string target;
        switch (variant) {
        case StageVariant::MsiJoint:
            target = think_block(inst.cot_text) + "\n" + answer_block(inst.formula_text);
            break;
        case StageVariant::MsiGuided:
            input += "\n" + think_block(inst.cot_text);
            target = answer_block(inst.formula_text);
            break;
        case StageVariant::Rgsc:
            target = answer_block(inst.formula_symbolic);
            break;
        }
        records.push_back({{"id", inst.id},
                           {"images", {inst.phase_png.generic_string(), inst.traj_png.generic_string()}},
                           {"trajectory", inst.trajectory_csv.generic_string()},
                           {"formula", inst.formula_text},
                           {"formula_symbolic", inst.formula_symbolic},
                           {"cot", inst.cot_text},
                           {"variant", variant_name(variant)},
                           {"prompt", system_prompt(variant)},
                           {"input", input},
                           {"target", target},
                           {"meta",
                            {{"seed", inst.seed},
                             {"categories", inst.term_categories},
                             {"retries", inst.retries},
                             {"cot_source", inst.cot_source == CotSource::Template ? "template" : "external"}}}});
    }
    return {{"variant", variant_name(variant)},
            {"system_prompt", system_prompt(variant)},
            {"count", records.size()},
            {"records", records}};
}

}  // namespace physsym
