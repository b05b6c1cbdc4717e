#pragma once

#include "physsym/expr.hpp"

#include <set>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace physsym {

struct RewardWeights {
    double format = 0.1;
    double structural = 0.6;
    double accuracy = 0.3;

    /// Throws std::invalid_argument on a negative or non-finite weight.
    void validate() const;
};

struct RewardBreakdown {
    int format = 0;
    double structural = 0.0;
    int accuracy = 0;
    double composite = 0.0;
    std::set<SkeletonTerm> gen_skeletons;
    std::set<SkeletonTerm> gt_skeletons;
    bool answer_parsed = false;
};

class NoAnswerTag : public std::runtime_error {
public:
    NoAnswerTag() : std::runtime_error("response has no <answer>...</answer> block") {}
};

class GroupTooSmall : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// 1 iff the response is exactly a non-empty think block followed by a
/// non-empty answer block, with only whitespace around them.
int format_reward(std::string_view response);

/// Body of the last complete answer block, trimmed.
std::string_view answer_body(std::string_view response);
Expr extract_answer(std::string_view response);

double jaccard(const std::set<SkeletonTerm>& a, const std::set<SkeletonTerm>& b);
double structural_reward(const Expr& gen, const Expr& gt);
int accuracy_reward(const Expr& gen, const Expr& gt);

RewardBreakdown composite_reward(std::string_view response, const Expr& gt, const RewardWeights& w = {});

std::vector<double> group_advantages(std::span<const double> rewards, double epsilon = 1e-8);

}  // namespace physsym
