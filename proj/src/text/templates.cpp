#include "openrel/text/templates.hpp"

#include "openrel/core/errors.hpp"

namespace openrel::text {

namespace {

constexpr TemplateBank kPairFeature = {
    "Please extract features for the {subject}-{object} pair based on the whole visual features of the image and the masks of the {subject} and {object}.",
    "Based on the image's holistic visual features and the masks of both {subject} and {object}, please derive the features of the {subject}-{object} pair.",
    "Utilizing the total visual features of the image, along with the {subject} and {object} masks, please identify the features of the {subject}-{object} pair.",
    "By considering the comprehensive visual features of the image and the respective masks of the {subject} and {object}, please isolate the features specific to the {subject}-{object} pair.",
    "Taking into account the global visual features of the image and the masks designated for the {subject} and {object}, please extract the particular features of the {subject}-{object} pair.",
    "Leveraging the entire visual features of the image as well as the masks for the {subject} and {object}, please delineate the features corresponding to the {subject}-{object} pair.",
    "Drawing on the overall visual features of the image and the masks of the {subject} and {object}, please ascertain the features for the {subject}-{object} pair.",
    "By harnessing the full visual features of the image along with the masks of the {subject} and {object}, please identify the distinctive features of the {subject}-{object} pair.",
    "With reference to the comprehensive visual features of the image and the masks for the {subject} and {object}, please extract the respective features of the {subject}-{object} pair.",
    "Considering the total visual features of the image and the defined masks for the {subject} and {object}, please determine the specific features of the {subject}-{object} pair.",
};

constexpr TemplateBank kRelationExistence = {
    "Based on the visual features of the entire image and the masks for the {subject} and {object}, estimate whether there is a relation between the {subject} and {object}.",
    "Considering the holistic visual features of the image and the masks of the {subject} and {object}, determine whether a relation exists between the two entities.",
    "Utilizing the complete visual features of the image along with the {subject} and {object} masks, assess whether there is a relation between the {subject} and {object}.",
    "Given the overall visual features of the image and the masks for the {subject} and {object}, evaluate whether a relation exists between the {subject} and {object}.",
    "By analyzing the entire visual features of the image and the masks of the {subject} and {object}, ascertain whether there is a relation between the {subject} and {object}.",
    "With the comprehensive visual features of the image and the masks for both {subject} and {object}, deduce whether there is a relation between the {subject} and {object}.",
    "Reflecting on the total visual features of the image and the masks applied to the {subject} and {object}, gauge whether there is a relation between the {subject} and {object}.",
    "Considering the full visual features of the image and the masks of the {subject} and {object}, infer whether a relation exists between the {subject} and {object}.",
    "Leveraging the overall visual features of the image and the masks designated for the {subject} and {object}, identify whether there is a relation between the {subject} and {object}.",
    "By examining the entire visual features of the image and the masks for the {subject} and {object}, predict whether there is a relation between the {subject} and {object}.",
};

constexpr TemplateBank kGeneration = {
    "Please determine what the relation is between {subject} and {object}.",
    "Please ascertain the relation between the {subject} and {object}.",
    "Please identify what relations exists between the {subject} and {object}.",
    "Please decide what kind of relation is present between the {subject} and the {object}.",
    "Please deduce the relation between the {subject} and the {object}.",
    "Please establish what the relation is between the {subject} and {object}.",
    "Please clarify the relation between the {subject} and {object}.",
    "Please determine the type of relation existing between the {subject} and the {object}.",
    "Please pinpoint the kind of relation between the {subject} and {object}.",
    "Please evaluate what the relation is between the {subject} and the {object}.",
};

constexpr TemplateBank kJudgement = {
    "Please judge between {subject} and {object} whether there is a relation {relation}.",
    "Please determine if there exists a relation between the {subject} and {object}, termed {relation}.",
    "Please ascertain whether there is a relation between the {subject} and {object}, identified as {relation}.",
    "Please evaluate if a relation between the {subject} and {object} can be classified as {relation}.",
    "Please judge whether there is a relation between the {subject} and {object} referred to as {relation}.",
    "Please decide if there is a relation between the {subject} and {object} denoted as {relation}.",
    "Please establish whether there is a relation between the {subject} and {object}, described as {relation}.",
    "Please conclude whether a relation exists between the {subject} and {object}, designated as {relation}.",
    "Please investigate whether there is a relation between the {subject} and {object}, recognized as {relation}.",
    "Please analyze if there exists a relation between the {subject} and {object}, characterized as {relation}.",
};

constexpr std::string_view kSubjectSlot = "{subject}";
constexpr std::string_view kObjectSlot = "{object}";
constexpr std::string_view kRelationSlot = "{relation}";

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

const TemplateBank& bank(BankKind kind) {
  switch (kind) {
    case BankKind::PairFeature:
      return kPairFeature;
    case BankKind::RelationExistence:
      return kRelationExistence;
    case BankKind::Generation:
      return kGeneration;
    case BankKind::Judgement:
      return kJudgement;
  }
  return kPairFeature;
}

std::size_t choose_template(Mode mode, std::mt19937_64& rng) {
  if (mode == Mode::Infer) return 0;
  std::uniform_int_distribution<std::size_t> dist(0, kTemplatesPerBank - 1);
  return dist(rng);
}

std::string fill(std::string_view tmpl, std::string_view subject, std::string_view object, std::string_view relation) {
  std::string out(tmpl);
  replace_all(out, kSubjectSlot, subject);
  replace_all(out, kObjectSlot, object);
  replace_all(out, kRelationSlot, relation);
  return out;
}

JudgementParts split_judgement(std::string_view tmpl, std::string_view subject, std::string_view object) {
  const auto pos = tmpl.find(kRelationSlot);
  if (pos == std::string_view::npos) throw ValidationError("judgement template has no {relation} slot");
  const auto tail = tmpl.substr(pos + kRelationSlot.size());
  if (tail.find('{') != std::string_view::npos) {
    throw ValidationError("judgement template must place {relation} as its final slot");
  }
  return JudgementParts{fill(tmpl.substr(0, pos), subject, object), std::string(tail)};
}

std::vector<std::string> all_template_words() {
  std::vector<std::string> out;
  for (auto kind : {BankKind::PairFeature, BankKind::RelationExistence, BankKind::Generation, BankKind::Judgement}) {
    for (auto t : bank(kind)) out.push_back(fill(t, "", "", ""));
  }
  return out;
}

}  // namespace openrel::text
