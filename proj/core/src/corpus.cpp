#include "prosody/corpus.hpp"

namespace prosody {

namespace {

[[noreturn]] void fail(const Utterance& utt, const std::string& msg) {
  throw ValidationError("utterance '" + utt.id + "': " + msg);
}

}  // namespace

void validate_utterance(const Utterance& utt, int vocab_size, int phone_count, int feature_dim) {
  const std::size_t n = utt.tokens.size();
  if (n == 0) fail(utt, "empty token sequence");
  if (utt.labels.size() != n || utt.token_spans.size() != n) {
    fail(utt, "tokens/labels/token_spans lengths differ: " + std::to_string(n) + "/" +
                  std::to_string(utt.labels.size()) + "/" + std::to_string(utt.token_spans.size()));
  }
  if (utt.labels.back() != BoundaryLabel::kIPH) fail(utt, "last label is not IPH");

  for (int tok : utt.tokens) {
    if (tok < 0 || tok >= vocab_size) fail(utt, "token id " + std::to_string(tok) + " out of range");
  }

  if (utt.frames.rank() != 2) fail(utt, "frames must be a T x F matrix");
  const int t_frames = utt.frames.rows();
  if (utt.frames.cols() != feature_dim) {
    fail(utt, "feature dim " + std::to_string(utt.frames.cols()) + " != corpus feature_dim " +
                  std::to_string(feature_dim));
  }
  if (static_cast<int>(utt.frame_phones.size()) != t_frames) {
    fail(utt, "frame_phones length != frame count");
  }
  for (int p : utt.frame_phones) {
    if (p < 0 || p >= phone_count) fail(utt, "phone id " + std::to_string(p) + " out of range");
  }

  // Spans: in bounds, non-empty, disjoint, increasing; silence exactly in
  // the gaps.
  int prev_end = 0;
  std::vector<bool> in_span(static_cast<std::size_t>(t_frames), false);
  for (std::size_t i = 0; i < n; ++i) {
    auto [start, end] = utt.token_spans[i];
    if (start < prev_end || end <= start || end > t_frames) {
      fail(utt, "bad span [" + std::to_string(start) + "," + std::to_string(end) + ") for token " +
                    std::to_string(i));
    }
    for (int f = start; f < end; ++f) in_span[static_cast<std::size_t>(f)] = true;
    prev_end = end;
  }
  for (int f = 0; f < t_frames; ++f) {
    bool speech = in_span[static_cast<std::size_t>(f)];
    if (speech && utt.frame_phones[static_cast<std::size_t>(f)] == 0) {
      fail(utt, "silence phone inside token span at frame " + std::to_string(f));
    }
    if (!speech && utt.frame_phones[static_cast<std::size_t>(f)] != 0) {
      fail(utt, "non-silence phone outside spans at frame " + std::to_string(f));
    }
  }
}

void validate_corpus(const Corpus& corpus) {
  if (corpus.vocab_size <= 0 || corpus.phone_count <= 0 || corpus.feature_dim <= 0) {
    throw ValidationError("corpus header fields must be positive");
  }
  for (const auto& utt : corpus.utterances) {
    validate_utterance(utt, corpus.vocab_size, corpus.phone_count, corpus.feature_dim);
  }
}

}  // namespace prosody
