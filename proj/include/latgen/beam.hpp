#pragma once

// Model-agnostic beam search.
//
// `expand(state, tokens)` returns the successor state and a log-probability per
// output id for the next position (-inf marks ids that may not be emitted).
// Each step keeps the `beam_size` best extensions by accumulated
// log-probability; a hypothesis finishes on `eos` or at `max_len`. The result
// is the finished hypothesis with the best score, where the score is the
// log-probability divided by the number of emitted ids (EOS included) when
// length normalization is on. Ties keep the earlier hypothesis.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace latgen {

struct BeamOptions {
  std::size_t beam_size = 4;
  std::size_t max_len = 20;
  int eos = 2;
  bool length_normalize = true;
};

template <class State>
struct BeamHypothesis {
  std::vector<int> tokens;  // emitted ids, EOS excluded
  std::vector<double> step_log_probs;  // one per emitted id, EOS included
  double log_prob = 0.0;
  bool finished = false;  // ended with EOS
  State state{};

  std::size_t length() const { return step_log_probs.size(); }
};

inline double beam_score(double log_prob, std::size_t length, bool normalize) {
  return normalize && length > 0 ? log_prob / static_cast<double>(length) : log_prob;
}

template <class State, class Expand>
BeamHypothesis<State> beam_search(State initial, Expand&& expand, const BeamOptions& opt) {
  std::vector<BeamHypothesis<State>> live(1), done;
  live[0].state = std::move(initial);
  const std::size_t width = std::max<std::size_t>(1, opt.beam_size);

  struct Candidate {
    double log_prob;
    std::size_t parent;
    int token;
    double step;
  };

  for (std::size_t t = 0; t < opt.max_len && !live.empty(); ++t) {
    std::vector<Candidate> cands;
    std::vector<State> next_states;
    next_states.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      auto [state, log_probs] = expand(live[h].state, live[h].tokens);
      next_states.push_back(std::move(state));
      for (std::size_t w = 0; w < log_probs.size(); ++w)
        if (std::isfinite(log_probs[w]))
          cands.push_back({live[h].log_prob + log_probs[w], h, static_cast<int>(w), log_probs[w]});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
    if (cands.size() > width) cands.resize(width);

    std::vector<BeamHypothesis<State>> next;
    for (const auto& c : cands) {
      BeamHypothesis<State> hyp;
      hyp.tokens = live[c.parent].tokens;
      hyp.step_log_probs = live[c.parent].step_log_probs;
      hyp.step_log_probs.push_back(c.step);
      hyp.log_prob = c.log_prob;
      hyp.state = next_states[c.parent];
      if (c.token == opt.eos) {
        hyp.finished = true;
        done.push_back(std::move(hyp));
      } else {
        hyp.tokens.push_back(c.token);
        next.push_back(std::move(hyp));
      }
    }
    live = std::move(next);
  }
  for (auto& h : live) done.push_back(std::move(h));  // truncated at max_len

  if (done.empty()) return {};
  std::size_t best = 0;
  for (std::size_t i = 1; i < done.size(); ++i)
    if (beam_score(done[i].log_prob, done[i].length(), opt.length_normalize) >
        beam_score(done[best].log_prob, done[best].length(), opt.length_normalize))
      best = i;
  return std::move(done[best]);
}

}  // namespace latgen
