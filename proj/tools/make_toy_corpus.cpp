// Writes a small synthetic post/response corpus as JSON Lines.
//
// Every post names a noun and a verb. Each post gets one of four response
// patterns at random, independent of its wording; a fifth of the posts carry
// a second reference that keeps the pattern and opens with "yes" or "well".

#include <algorithm>
#include <array>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace {

struct Noun {
  std::string word, adj, alt_adj;
};

const std::array<Noun, 10> kNouns = {{{"tea", "warm", "nice"},
                                      {"coffee", "hot", "strong"},
                                      {"cats", "cute", "soft"},
                                      {"dogs", "cute", "loyal"},
                                      {"rain", "cold", "calm"},
                                      {"snow", "cold", "white"},
                                      {"music", "nice", "loud"},
                                      {"books", "good", "long"},
                                      {"movies", "good", "long"},
                                      {"games", "fun", "hard"}}};
const std::array<std::string, 4> kVerbs = {"like", "love", "enjoy", "miss"};

struct Record {
  std::string post, response, pos;
};

const std::array<std::string, 4> kPosts = {"do you V N ?", "how much do you V N ?", "tell me about the N you V",
                                          "what kind of N do you V ?"};

std::string fill(std::string text, const Noun& n, const std::string& v) {
  for (auto [key, word] : {std::pair<char, const std::string*>{'N', &n.word}, {'V', &v}}) {
    const auto at = text.find(key);
    if (at != std::string::npos) text.replace(at, 1, *word);
  }
  return text;
}

std::vector<Record> responses_for(int pattern, const std::string& post, const Noun& n, const std::string& v,
                                  bool bag) {
  std::vector<Record> out;
  switch (pattern) {
    case 0:
      out.push_back({post, "i " + v + " " + n.word, "r v n"});
      if (bag) out.push_back({post, "yes i " + v + " " + n.word, "u r v n"});
      break;
    case 1:
      out.push_back({post, n.word + " so " + n.adj, "n d a"});
      if (bag) out.push_back({post, "yes " + n.word + " so " + n.alt_adj, "u n d a"});
      break;
    case 2:
      out.push_back({post, "yes very much", "u d d"});
      if (bag) out.push_back({post, "well yes very much", "u u d d"});
      break;
    default:
      out.push_back({post, "we " + v + " " + n.adj + " " + n.word + " too", "r v a n d"});
      if (bag) out.push_back({post, "yes we " + v + " " + n.alt_adj + " " + n.word + " too", "u r v a n d"});
      break;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic toy corpus"};
  std::string out_path;
  std::size_t pairs = 50;
  std::uint64_t seed = 7;
  app.add_option("-o,--output", out_path, "output JSONL path")->required();
  app.add_option("-n,--pairs", pairs, "number of distinct posts")->check(CLI::Range(1, 160));
  app.add_option("--seed", seed, "shuffle seed");
  CLI11_PARSE(app, argc, argv);

  struct Combo {
    int post, noun, verb;
  };
  std::vector<Combo> combos;
  for (int p = 0; p < 4; ++p)
    for (int n = 0; n < 10; ++n)
      for (int v = 0; v < 4; ++v) combos.push_back({p, n, v});
  std::mt19937_64 rng(seed);
  std::shuffle(combos.begin(), combos.end(), rng);
  combos.resize(pairs);

  std::ofstream out(out_path);
  if (!out) {
    std::cerr << "cannot write " << out_path << "\n";
    return 3;
  }
  for (std::size_t i = 0; i < combos.size(); ++i) {
    const auto& c = combos[i];
    const Noun& noun = kNouns[static_cast<std::size_t>(c.noun)];
    const std::string& verb = kVerbs[static_cast<std::size_t>(c.verb)];
    const int pattern = static_cast<int>(rng() % 4);
    const std::string post = fill(kPosts[static_cast<std::size_t>(c.post)], noun, verb);
    for (const auto& r : responses_for(pattern, post, noun, verb, i % 5 == 0))
      out << nlohmann::json{{"post", r.post}, {"response", r.response}, {"response_pos", r.pos}}.dump() << "\n";
  }
  return 0;
}
