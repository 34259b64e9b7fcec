#include "prosody/boundary.hpp"

namespace prosody {

BoundaryLabel boundary_from_int(int v) {
  if (v < 0 || v >= kNumBoundaryLevels) {
    throw ValidationError("boundary label out of range: " + std::to_string(v));
  }
  return static_cast<BoundaryLabel>(v);
}

const char* boundary_name(BoundaryLabel l) {
  switch (l) {
    case BoundaryLabel::kCC:
      return "CC";
    case BoundaryLabel::kLW:
      return "LW";
    case BoundaryLabel::kPW:
      return "PW";
    case BoundaryLabel::kPPH:
      return "PPH";
    case BoundaryLabel::kIPH:
      return "IPH";
  }
  return "?";
}

namespace {

void require_nonempty(std::size_t n, const char* node) {
  if (n == 0) throw ValidationError(std::string("malformed tree: empty ") + node + " node");
}

}  // namespace

std::vector<BoundaryLabel> tree_to_labels(const ProsodyTree& tree) {
  require_nonempty(tree.phrases.size(), "root");
  std::vector<BoundaryLabel> labels;
  for (const auto& iph : tree.phrases) {
    require_nonempty(iph.phrases.size(), "IPH");
    for (std::size_t p = 0; p < iph.phrases.size(); ++p) {
      const auto& pph = iph.phrases[p];
      require_nonempty(pph.words.size(), "PPH");
      for (std::size_t w = 0; w < pph.words.size(); ++w) {
        const auto& pw = pph.words[w];
        require_nonempty(pw.words.size(), "PW");
        for (std::size_t l = 0; l < pw.words.size(); ++l) {
          const auto& lw = pw.words[l];
          require_nonempty(lw.tokens.size(), "LW");
          for (std::size_t t = 0; t < lw.tokens.size(); ++t) {
            bool last_in_lw = (t + 1 == lw.tokens.size());
            bool last_in_pw = last_in_lw && (l + 1 == pw.words.size());
            bool last_in_pph = last_in_pw && (w + 1 == pph.words.size());
            bool last_in_iph = last_in_pph && (p + 1 == iph.phrases.size());
            BoundaryLabel label = BoundaryLabel::kCC;
            if (last_in_iph) {
              label = BoundaryLabel::kIPH;
            } else if (last_in_pph) {
              label = BoundaryLabel::kPPH;
            } else if (last_in_pw) {
              label = BoundaryLabel::kPW;
            } else if (last_in_lw) {
              label = BoundaryLabel::kLW;
            }
            labels.push_back(label);
          }
        }
      }
    }
  }
  return labels;
}

std::vector<int> tree_tokens(const ProsodyTree& tree) {
  require_nonempty(tree.phrases.size(), "root");
  std::vector<int> tokens;
  for (const auto& iph : tree.phrases) {
    require_nonempty(iph.phrases.size(), "IPH");
    for (const auto& pph : iph.phrases) {
      require_nonempty(pph.words.size(), "PPH");
      for (const auto& pw : pph.words) {
        require_nonempty(pw.words.size(), "PW");
        for (const auto& lw : pw.words) {
          require_nonempty(lw.tokens.size(), "LW");
          tokens.insert(tokens.end(), lw.tokens.begin(), lw.tokens.end());
        }
      }
    }
  }
  return tokens;
}

ProsodyTree labels_to_tree(const std::vector<int>& tokens, const std::vector<BoundaryLabel>& labels) {
  if (tokens.empty() || tokens.size() != labels.size()) {
    throw ValidationError("labels_to_tree: need len(labels) == len(tokens) >= 1, got " +
                          std::to_string(labels.size()) + " labels for " + std::to_string(tokens.size()) +
                          " tokens");
  }
  if (labels.back() != BoundaryLabel::kIPH) {
    throw ValidationError("invalid label sequence: last label must be IPH, got " +
                          std::string(boundary_name(labels.back())));
  }

  ProsodyTree tree;
  IntonationalPhrase iph;
  ProsodicPhrase pph;
  ProsodicWord pw;
  LexiconWord lw;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    lw.tokens.push_back(tokens[i]);
    BoundaryLabel l = labels[i];
    if (l >= BoundaryLabel::kLW) {
      pw.words.push_back(std::move(lw));
      lw = {};
    }
    if (l >= BoundaryLabel::kPW) {
      pph.words.push_back(std::move(pw));
      pw = {};
    }
    if (l >= BoundaryLabel::kPPH) {
      iph.phrases.push_back(std::move(pph));
      pph = {};
    }
    if (l == BoundaryLabel::kIPH) {
      tree.phrases.push_back(std::move(iph));
      iph = {};
    }
  }
  return tree;
}

std::vector<BoundaryLabel> labels_from_ints(const std::vector<int>& v) {
  std::vector<BoundaryLabel> out;
  out.reserve(v.size());
  for (int x : v) out.push_back(boundary_from_int(x));
  return out;
}

std::vector<int> labels_to_ints(const std::vector<BoundaryLabel>& v) {
  std::vector<int> out;
  out.reserve(v.size());
  for (BoundaryLabel l : v) out.push_back(level(l));
  return out;
}

}  // namespace prosody
