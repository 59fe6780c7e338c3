#pragma once

#include <array>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace openrel::text {

enum class BankKind { PairFeature, RelationExistence, Generation, Judgement };
enum class Mode { Train, Infer };

inline constexpr std::size_t kTemplatesPerBank = 10;
using TemplateBank = std::array<std::string_view, kTemplatesPerBank>;

// Slots: {subject}, {object}, {relation} (judgement only, always last).
const TemplateBank& bank(BankKind kind);

// Training draws uniformly from the bank; inference always uses entry 0.
std::size_t choose_template(Mode mode, std::mt19937_64& rng);

std::string fill(std::string_view tmpl, std::string_view subject, std::string_view object,
                 std::string_view relation = {});

// A judgement template cut at its {relation} slot.
struct JudgementParts {
  std::string prefix;  // text before {relation}, subject/object filled
  std::string tail;    // text after {relation} (punctuation only for the shipped bank)
};
// Throws ValidationError when {relation} is missing or another slot follows it.
JudgementParts split_judgement(std::string_view tmpl, std::string_view subject, std::string_view object);

// Every template text with slots blanked, for vocabulary construction.
std::vector<std::string> all_template_words();

}  // namespace openrel::text
