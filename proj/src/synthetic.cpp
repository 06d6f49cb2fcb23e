#include "empsoa/synthetic.hpp"

#include <array>
#include <random>

#include "empsoa/errors.hpp"

namespace empsoa {

namespace {

struct Theme {
  const char* emotion;
  std::array<const char*, 4> events;   // what happened, spoken by the other
  std::array<const char*, 3> feelings; // how it felt
  std::array<const char*, 3> replies;  // the self's answer, as a phrase
};

const std::array<Theme, 8> kThemes = {{
    {"sad", {"my dog died", "i lost my job", "my friend moved away", "i failed the exam"},
     {"i cried all night", "i feel empty", "it hurts a lot"},
     {"i am so sorry", "that is really hard", "sending you a hug"}},
    {"joyful", {"i got the job", "we won the game", "my sister had a baby", "i passed the exam"},
     {"i could not stop smiling", "best day ever", "i am over the moon"},
     {"that is wonderful news", "congratulations to you", "so happy for you"}},
    {"afraid", {"i heard a noise downstairs", "the storm is getting worse", "a stranger followed me",
                "the plane shook a lot"},
     {"my heart was racing", "i could not move", "i was shaking"},
     {"are you safe now", "please stay safe", "that sounds scary"}},
    {"angry", {"someone stole my bike", "my boss yelled at me", "the driver cut me off", "they broke my window"},
     {"i wanted to scream", "i was so mad", "it made my blood boil"},
     {"that is not fair", "i would be mad too", "what a rude thing"}},
    {"grateful", {"my neighbor fixed my car", "a friend paid for lunch", "my mom helped me move",
                  "a stranger returned my wallet"},
     {"i owe them one", "it meant a lot", "i felt so thankful"},
     {"that was very kind", "good people exist", "what a nice gesture"}},
    {"anxious", {"my interview is tomorrow", "the results come out soon", "i have a big speech",
                 "my flight leaves early"},
     {"i cannot sleep", "my stomach is in knots", "i keep worrying"},
     {"you will do fine", "try to breathe slowly", "you have prepared well"}},
    {"proud", {"my son learned to read", "i finished my first marathon", "my team shipped the project",
               "i built a table"},
     {"i worked so hard", "it took months", "i did not give up"},
     {"you should be proud", "great work indeed", "that is impressive"}},
    {"lonely", {"nobody called on my birthday", "i eat dinner alone", "my roommate left", "i have no one to talk to"},
     {"the house is so quiet", "i feel invisible", "days feel long"},
     {"i am here for you", "want to talk more", "you are not alone"}},
}};

std::vector<std::string> words(const char* phrase) { return tokenize(phrase); }

}  // namespace

std::vector<DialogueSample> synthetic_corpus(const SyntheticCorpusSpec& spec) {
  if (spec.emotions == 0 || spec.emotions > kThemes.size())
    throw ConfigError("synthetic corpus supports 1 to " + std::to_string(kThemes.size()) + " emotions");
  std::mt19937_64 rng(spec.seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  std::vector<DialogueSample> out;
  for (std::size_t i = 0; i < spec.dialogues; ++i) {
    const Theme& theme = kThemes[i % spec.emotions];
    DialogueSample s;
    s.id = spec.id_prefix + "-" + std::to_string(i);
    s.emotion = theme.emotion;
    const std::size_t event = pick(theme.events.size());
    const std::size_t feeling = pick(theme.feelings.size());
    const std::size_t reply = pick(theme.replies.size());
    // Two shapes: a single opening turn, or opening / question / follow-up.
    if (pick(2) == 0) {
      s.utterances = {{Role::kOther, words(theme.events[event])}};
    } else {
      s.utterances = {{Role::kOther, words(theme.events[event])},
                      {Role::kSelf, words("what happened next ?")},
                      {Role::kOther, words(theme.feelings[feeling])}};
    }
    s.response = words(theme.replies[reply]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace empsoa
