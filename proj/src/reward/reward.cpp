#include "physsym/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace physsym {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s)
{
    while (!s.empty() && is_space(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && is_space(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

bool has_any_tag(std::string_view body)
{
    for (auto tag : {kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose}) {
        if (body.find(tag) != std::string_view::npos) {
            return true;
        }
    }
    return false;
}

// Consumes "<open>body</close>" at the front of s; returns the body.
std::optional<std::string_view> take_block(std::string_view& s, std::string_view open, std::string_view close)
{
    if (!s.starts_with(open)) {
        return std::nullopt;
    }
    auto const end = s.find(close, open.size());
    if (end == std::string_view::npos) {
        return std::nullopt;
    }
    auto body = s.substr(open.size(), end - open.size());
    s.remove_prefix(end + close.size());
    return body;
}

}  // namespace

void RewardWeights::validate() const
{
    for (double const w : {format, structural, accuracy}) {
        if (!std::isfinite(w) || w < 0.0) {
            throw std::invalid_argument("reward weights must be finite and non-negative");
        }
    }
}

int format_reward(std::string_view response)
{
    auto s = trim(response);
    auto const think = take_block(s, kThinkOpen, kThinkClose);
    if (!think || trim(*think).empty() || has_any_tag(*think)) {
        return 0;
    }
    s = trim(s);
    auto const answer = take_block(s, kAnswerOpen, kAnswerClose);
    if (!answer || trim(*answer).empty() || has_any_tag(*answer)) {
        return 0;
    }
    return trim(s).empty() ? 1 : 0;
}

std::string_view answer_body(std::string_view response)
{
    auto const close = response.rfind(kAnswerClose);
    if (close == std::string_view::npos) {
        throw NoAnswerTag();
    }
    auto const open = response.rfind(kAnswerOpen, close);
    if (open == std::string_view::npos) {
        throw NoAnswerTag();
    }
    return trim(response.substr(open + kAnswerOpen.size(), close - open - kAnswerOpen.size()));
}

Expr extract_answer(std::string_view response) { return parse(answer_body(response)); }

double jaccard(const std::set<SkeletonTerm>& a, const std::set<SkeletonTerm>& b)
{
    std::size_t shared = 0;
    for (const auto& term : a) {
        shared += b.contains(term) ? 1 : 0;
    }
    std::size_t const total = a.size() + b.size() - shared;
    return total == 0 ? 1.0 : static_cast<double>(shared) / static_cast<double>(total);
}

double structural_reward(const Expr& gen, const Expr& gt) { return jaccard(skeleton_set(gen), skeleton_set(gt)); }

int accuracy_reward(const Expr& gen, const Expr& gt) { return symbolic_equal(gen, gt) ? 1 : 0; }

RewardBreakdown composite_reward(std::string_view response, const Expr& gt, const RewardWeights& w)
{
    RewardBreakdown out;
    out.format = format_reward(response);
    out.gt_skeletons = skeleton_set(gt);
    try {
        Expr const gen = extract_answer(response);
        out.answer_parsed = true;
        out.gen_skeletons = skeleton_set(gen);
        out.structural = jaccard(out.gen_skeletons, out.gt_skeletons);
        out.accuracy = accuracy_reward(gen, gt);
    } catch (const NoAnswerTag&) {
    } catch (const SyntaxError&) {
    } catch (const UnknownSymbol&) {
    }
    out.composite = w.format * out.format + w.structural * out.structural + w.accuracy * out.accuracy;
    return out;
}

std::vector<double> group_advantages(std::span<const double> rewards, double epsilon)
{
    if (rewards.size() < 2) {
        throw GroupTooSmall("advantage group needs at least 2 rewards, got " + std::to_string(rewards.size()));
    }
    if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) {
        return std::vector<double>(rewards.size(), 0.0);  // the rounded mean need not equal the shared value
    }
    auto const n = static_cast<double>(rewards.size());
    double const mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double const r : rewards) {
        var += (r - mean) * (r - mean);
    }
    double const sd = std::sqrt(var / n);
    std::vector<double> adv;
    adv.reserve(rewards.size());
    for (double const r : rewards) {
        adv.push_back((r - mean) / (sd + epsilon));
    }
    return adv;
}

}  // namespace physsym
