#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prosody/boundary.hpp"
#include "prosody/tensor.hpp"

namespace prosody {

/// One {speech, text, prosody} triplet plus its frame alignment.
///  - tokens/labels/token_spans all have length N (tokens).
///  - frames is T x F; token_spans are disjoint increasing half-open frame
///    intervals; frames outside every span are silence (frame_phones == 0).
///  - labels.back() is always IPH.
struct Utterance {
  std::string id;
  std::vector<int> tokens;
  std::vector<BoundaryLabel> labels;
  Tensor frames;  // T x F
  std::vector<std::pair<int, int>> token_spans;
  std::vector<int> frame_phones;

  int num_tokens() const { return static_cast<int>(tokens.size()); }
  int num_frames() const { return frames.rank() == 2 ? frames.rows() : 0; }
};

struct Corpus {
  std::vector<Utterance> utterances;
  int vocab_size = 0;
  int phone_count = 0;
  int feature_dim = 0;

  std::size_t size() const { return utterances.size(); }
};

/// Throws ValidationError naming the utterance id on the first violated
/// invariant. vocab_size/phone_count/feature_dim come from the owning corpus.
void validate_utterance(const Utterance& utt, int vocab_size, int phone_count, int feature_dim);
void validate_corpus(const Corpus& corpus);

}  // namespace prosody
