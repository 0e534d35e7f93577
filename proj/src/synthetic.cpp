#include "balm/synthetic.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "balm/rng.hpp"

namespace balm::synthetic {

namespace {

// Slot classes for the template grammar.
enum class Slot { det, bare_noun, noun, verb_i, verb_t, adj, adv, prep, stop };

const std::vector<std::string> kDets = {"the", "a"};
const std::vector<std::string> kBareNouns = {"water", "rain", "snow", "music", "wind", "smoke"};
const std::vector<std::string> kNouns = {
    "dog",    "cat",    "bird",   "horse",  "cow",     "fox",     "wolf",  "bear",
    "mouse",  "rabbit", "boy",    "girl",   "man",     "woman",   "child", "farmer",
    "teacher", "student", "house", "tree",  "river",   "stone",   "ball",  "book",
    "chair",  "table",  "garden", "road",   "hill",    "bridge",  "boat",  "car"};
const std::vector<std::string> kVerbsI = {"runs",  "sleeps", "jumps",  "walks", "swims",
                                          "waits", "sings",  "smiles", "falls", "stands",
                                          "sits",  "laughs", "barks",  "dances"};
const std::vector<std::string> kVerbsT = {"sees",    "chases", "finds", "likes", "follows",
                                          "carries", "holds",  "watches", "pushes", "pulls",
                                          "lifts",   "paints", "draws", "cleans"};
const std::vector<std::string> kAdjs = {
    "big",   "small", "red",   "blue",  "green",  "old",   "young", "happy",
    "sad",   "quick", "slow",  "tall",  "short",  "brown", "white", "black",
    "bright", "dark", "quiet", "loud",  "warm",   "cold"};
const std::vector<std::string> kAdvs = {"quickly", "slowly", "quietly", "loudly",
                                        "happily", "sadly",  "gently",  "badly",
                                        "well",    "today",  "now",     "here"};
const std::vector<std::string> kPreps = {"in", "on", "near", "behind", "under", "over"};

// Templates stay within 3..10 tokens including the final period.
const std::vector<std::vector<Slot>> kTemplates = {
    {Slot::bare_noun, Slot::verb_i, Slot::stop},
    {Slot::det, Slot::noun, Slot::verb_i, Slot::stop},
    {Slot::det, Slot::adj, Slot::noun, Slot::verb_i, Slot::stop},
    {Slot::det, Slot::noun, Slot::verb_i, Slot::adv, Slot::stop},
    {Slot::det, Slot::adj, Slot::noun, Slot::verb_i, Slot::adv, Slot::stop},
    {Slot::det, Slot::noun, Slot::verb_t, Slot::det, Slot::noun, Slot::stop},
    {Slot::det, Slot::adj, Slot::noun, Slot::verb_t, Slot::det, Slot::noun, Slot::stop},
    {Slot::det, Slot::noun, Slot::verb_t, Slot::det, Slot::adj, Slot::noun, Slot::stop},
    {Slot::det, Slot::adj, Slot::noun, Slot::verb_t, Slot::det, Slot::adj, Slot::noun, Slot::stop},
    {Slot::det, Slot::noun, Slot::verb_i, Slot::prep, Slot::det, Slot::noun, Slot::stop},
    {Slot::det, Slot::adj, Slot::noun, Slot::verb_i, Slot::prep, Slot::det, Slot::noun, Slot::stop},
    {Slot::det, Slot::adj, Slot::noun, Slot::verb_t, Slot::det, Slot::adj, Slot::noun, Slot::adv,
     Slot::stop},
    {Slot::det, Slot::noun, Slot::verb_t, Slot::det, Slot::noun, Slot::prep, Slot::det, Slot::noun,
     Slot::stop},
    {Slot::det, Slot::adj, Slot::noun, Slot::verb_t, Slot::det, Slot::noun, Slot::prep, Slot::det,
     Slot::noun, Slot::stop},
};

struct WordLists {
  std::vector<std::string> dets, bare_nouns, nouns, verbs_i, verbs_t, adjs, advs, preps;

  const std::vector<std::string>& for_slot(Slot s) const {
    switch (s) {
      case Slot::det: return dets;
      case Slot::bare_noun: return bare_nouns;
      case Slot::noun: return nouns;
      case Slot::verb_i: return verbs_i;
      case Slot::verb_t: return verbs_t;
      case Slot::adj: return adjs;
      case Slot::adv: return advs;
      case Slot::prep: return preps;
      case Slot::stop: break;
    }
    throw ContractError("no word list for slot");
  }
};

WordLists trimmed_lists(int vocab_size) {
  if (vocab_size < 10) throw ContractError("make_synthetic: vocab_size must be >= 10");
  struct ClassSpec {
    const std::vector<std::string>* master;
    std::vector<std::string>* out;
    int min_count;
  };
  WordLists lists;
  std::vector<ClassSpec> classes = {
      {&kDets, &lists.dets, 2},       {&kBareNouns, &lists.bare_nouns, 1},
      {&kNouns, &lists.nouns, 3},     {&kVerbsI, &lists.verbs_i, 2},
      {&kVerbsT, &lists.verbs_t, 2},  {&kAdjs, &lists.adjs, 2},
      {&kAdvs, &lists.advs, 1},       {&kPreps, &lists.preps, 1}};

  int master_total = 0;
  int min_total = 0;
  for (const auto& c : classes) {
    master_total += static_cast<int>(c.master->size());
    min_total += c.min_count;
  }
  const int budget = std::min(vocab_size - 1, master_total);  // reserve one slot for '.'
  // Tiny budgets cannot honor the per-class minimums; fall back to 1 apiece.
  const bool tight = budget < min_total;
  auto floor_of = [&](size_t i) { return tight ? 1 : classes[i].min_count; };

  // Proportional allocation with per-class minimums, then round-robin topping
  // up so the total lands exactly on the budget.
  int assigned = 0;
  std::vector<int> counts(classes.size());
  for (size_t i = 0; i < classes.size(); ++i) {
    int want = static_cast<int>(static_cast<long>(budget) *
                                static_cast<long>(classes[i].master->size()) / master_total);
    want = std::max(want, floor_of(i));
    want = std::min(want, static_cast<int>(classes[i].master->size()));
    counts[i] = want;
    assigned += want;
  }
  for (size_t i = 0; assigned > budget; i = (i + 1) % classes.size()) {
    if (counts[i] > floor_of(i)) {
      --counts[i];
      --assigned;
    }
  }
  for (size_t i = 0; assigned < budget; i = (i + 1) % classes.size()) {
    if (counts[i] < static_cast<int>(classes[i].master->size())) {
      ++counts[i];
      ++assigned;
    }
    bool any_room = false;
    for (size_t j = 0; j < classes.size(); ++j) {
      if (counts[j] < static_cast<int>(classes[j].master->size())) any_room = true;
    }
    if (!any_room) break;
  }
  for (size_t i = 0; i < classes.size(); ++i) {
    classes[i].out->assign(classes[i].master->begin(), classes[i].master->begin() + counts[i]);
  }
  return lists;
}

}  // namespace

CipherKind parse_cipher_kind(const std::string& name) {
  if (name == "identity") return CipherKind::identity;
  if (name == "substitution") return CipherKind::substitution;
  if (name == "substitution-swap") return CipherKind::substitution_swap;
  throw ContractError("unknown cipher kind '" + name +
                      "' (expected identity, substitution, or substitution-swap)");
}

std::vector<std::string> lexicon(int vocab_size) {
  WordLists lists = trimmed_lists(vocab_size);
  std::vector<std::string> words;
  for (const auto* list : {&lists.dets, &lists.bare_nouns, &lists.nouns, &lists.verbs_i,
                           &lists.verbs_t, &lists.adjs, &lists.advs, &lists.preps}) {
    words.insert(words.end(), list->begin(), list->end());
  }
  return words;
}

std::unordered_map<std::string, std::string> cipher_map(int vocab_size, const CipherSpec& spec) {
  std::vector<std::string> words = lexicon(vocab_size);
  std::unordered_map<std::string, std::string> map;
  map.reserve(words.size() + 1);
  map["."] = ".";
  if (spec.kind == CipherKind::identity) {
    for (const auto& w : words) map[w] = w;
    return map;
  }
  std::vector<size_t> perm(words.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(spec.cipher_seed ^ 0xc1f3ULL);
  rng.shuffle(perm);
  for (size_t i = 0; i < words.size(); ++i) map[words[i]] = words[perm[i]];
  return map;
}

Corpus make_synthetic(int vocab_size, int n_sentences, uint64_t seed, const CipherSpec& spec) {
  if (n_sentences < 1) throw ContractError("make_synthetic: n_sentences must be >= 1");
  WordLists lists = trimmed_lists(vocab_size);
  auto cipher = cipher_map(vocab_size, spec);
  Rng rng(seed);

  Corpus corpus;
  corpus.source.reserve(static_cast<size_t>(n_sentences));
  corpus.target.reserve(static_cast<size_t>(n_sentences));
  std::set<std::string> seen;
  const long max_attempts = 200L * n_sentences + 1000;
  long attempts = 0;
  while (static_cast<int>(corpus.source.size()) < n_sentences) {
    ++attempts;
    const auto& tmpl = kTemplates[rng.below(kTemplates.size())];
    std::vector<std::string> tokens;
    std::vector<Slot> slots;
    tokens.reserve(tmpl.size());
    for (Slot s : tmpl) {
      if (s == Slot::stop) {
        tokens.push_back(".");
      } else {
        const auto& list = lists.for_slot(s);
        tokens.push_back(list[rng.below(list.size())]);
      }
      slots.push_back(s);
    }
    std::string line;
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (i) line.push_back(' ');
      line += tokens[i];
    }
    // Prefer distinct sentences; fall back to duplicates once the grammar at
    // this vocab size cannot supply more.
    if (!seen.insert(line).second && attempts < max_attempts) continue;

    std::vector<std::string> tgt_tokens = tokens;
    if (spec.kind == CipherKind::substitution_swap) {
      for (size_t i = 0; i + 1 < slots.size(); ++i) {
        if (slots[i] == Slot::adj && slots[i + 1] == Slot::noun) {
          std::swap(tgt_tokens[i], tgt_tokens[i + 1]);
        }
      }
    }
    std::string tgt_line;
    for (size_t i = 0; i < tgt_tokens.size(); ++i) {
      if (i) tgt_line.push_back(' ');
      tgt_line += cipher.at(tgt_tokens[i]);
    }
    corpus.source.push_back(std::move(line));
    corpus.target.push_back(std::move(tgt_line));
  }
  return corpus;
}

std::string decipher(const std::string& target_line, int vocab_size, const CipherSpec& spec) {
  auto forward = cipher_map(vocab_size, spec);
  std::unordered_map<std::string, std::string> inverse;
  inverse.reserve(forward.size());
  for (const auto& [src, tgt] : forward) inverse[tgt] = src;

  std::istringstream in(target_line);
  std::string tok, out;
  while (in >> tok) {
    auto it = inverse.find(tok);
    if (it == inverse.end()) throw ContractError("decipher: unknown target token '" + tok + "'");
    if (!out.empty()) out.push_back(' ');
    out += it->second;
  }
  return out;
}

}  // namespace balm::synthetic
