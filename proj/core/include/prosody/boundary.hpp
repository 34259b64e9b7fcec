#pragma once

#include <string>
#include <vector>

#include "prosody/errors.hpp"

namespace prosody {

/// Five-level prosodic boundary hierarchy, ordered by break strength:
/// Character < Lexicon Word < Prosodic Word < Prosodic Phrase <
/// Intonational Phrase. One label per text token, naming the strongest
/// boundary that closes right after the token.
enum class BoundaryLabel : int {
  kCC = 0,
  kLW = 1,
  kPW = 2,
  kPPH = 3,
  kIPH = 4,
};

inline constexpr int kNumBoundaryLevels = 5;

inline int level(BoundaryLabel l) { return static_cast<int>(l); }
BoundaryLabel boundary_from_int(int v);
const char* boundary_name(BoundaryLabel l);

/// Hierarchical constituent structure: IPH -> PPH -> PW -> LW -> tokens.
/// Leaves are token ids at uniform depth; leaf order equals token order.
struct LexiconWord {
  std::vector<int> tokens;
};
struct ProsodicWord {
  std::vector<LexiconWord> words;
};
struct ProsodicPhrase {
  std::vector<ProsodicWord> words;
};
struct IntonationalPhrase {
  std::vector<ProsodicPhrase> phrases;
};
struct ProsodyTree {
  std::vector<IntonationalPhrase> phrases;
};

/// Flattens a tree to one label per leaf: the level of the highest
/// constituent closing immediately after that leaf. The final leaf is always
/// IPH. Throws ValidationError on an empty node.
std::vector<BoundaryLabel> tree_to_labels(const ProsodyTree& tree);

/// Leaf tokens in order. Throws ValidationError on an empty node.
std::vector<int> tree_tokens(const ProsodyTree& tree);

/// Inverse of tree_to_labels: rebuilds the unique tree whose flattening is
/// `labels`. Requires len(labels) == len(tokens) >= 1 and a terminal IPH.
ProsodyTree labels_to_tree(const std::vector<int>& tokens, const std::vector<BoundaryLabel>& labels);

std::vector<BoundaryLabel> labels_from_ints(const std::vector<int>& v);
std::vector<int> labels_to_ints(const std::vector<BoundaryLabel>& v);

}  // namespace prosody
