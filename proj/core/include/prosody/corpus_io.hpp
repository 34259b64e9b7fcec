#pragma once

#include <filesystem>

#include "prosody/corpus.hpp"

namespace prosody {

/// JSONL corpus file. First line is a header object
///   {"vocab_size":V,"phone_count":P,"feature_dim":F,"format_version":1}
/// followed by one utterance object per line with keys id, tokens, labels,
/// frames, token_spans, frame_phones. Serialization is canonical: fixed key
/// order, shortest round-trip decimals for floats, so write(read(f)) is
/// byte-identical.
Corpus read_corpus(const std::filesystem::path& path);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

std::string utterance_to_json_line(const Utterance& utt);
Utterance utterance_from_json_line(const std::string& line, int line_number);

inline constexpr int kCorpusFormatVersion = 1;

}  // namespace prosody
