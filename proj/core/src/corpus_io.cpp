#include "prosody/corpus_io.hpp"

#include <fstream>

#include <json.hpp>

namespace prosody {

namespace {

using json = nlohmann::ordered_json;

json header_json(const Corpus& corpus) {
  json h;
  h["vocab_size"] = corpus.vocab_size;
  h["phone_count"] = corpus.phone_count;
  h["feature_dim"] = corpus.feature_dim;
  h["format_version"] = kCorpusFormatVersion;
  return h;
}

}  // namespace

std::string utterance_to_json_line(const Utterance& utt) {
  json j;
  j["id"] = utt.id;
  j["tokens"] = utt.tokens;
  j["labels"] = labels_to_ints(utt.labels);
  json frames = json::array();
  const int t_frames = utt.frames.rows();
  const int f_dim = utt.frames.cols();
  for (int t = 0; t < t_frames; ++t) {
    json row = json::array();
    for (int f = 0; f < f_dim; ++f) row.push_back(utt.frames.at(t, f));
    frames.push_back(std::move(row));
  }
  j["frames"] = std::move(frames);
  json spans = json::array();
  for (auto [s, e] : utt.token_spans) spans.push_back(json::array({s, e}));
  j["token_spans"] = std::move(spans);
  j["frame_phones"] = utt.frame_phones;
  return j.dump();
}

Utterance utterance_from_json_line(const std::string& line, int line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_number);
  }
  try {
    Utterance utt;
    utt.id = j.at("id").get<std::string>();
    utt.tokens = j.at("tokens").get<std::vector<int>>();
    utt.labels = labels_from_ints(j.at("labels").get<std::vector<int>>());
    const auto& frames = j.at("frames");
    int t_frames = static_cast<int>(frames.size());
    int f_dim = t_frames ? static_cast<int>(frames[0].size()) : 0;
    Tensor mat({t_frames, f_dim});
    for (int t = 0; t < t_frames; ++t) {
      const auto& row = frames[t];
      if (static_cast<int>(row.size()) != f_dim) {
        throw ParseError("ragged frame rows", line_number);
      }
      for (int f = 0; f < f_dim; ++f) mat.at(t, f) = row[f].get<double>();
    }
    utt.frames = std::move(mat);
    for (const auto& span : j.at("token_spans")) {
      utt.token_spans.emplace_back(span.at(0).get<int>(), span.at(1).get<int>());
    }
    utt.frame_phones = j.at("frame_phones").get<std::vector<int>>();
    return utt;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad utterance object: ") + e.what(), line_number);
  }
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file: " + path.string());

  Corpus corpus;
  std::string line;
  int line_number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    if (!have_header) {
      json h;
      try {
        h = json::parse(line);
        corpus.vocab_size = h.at("vocab_size").get<int>();
        corpus.phone_count = h.at("phone_count").get<int>();
        corpus.feature_dim = h.at("feature_dim").get<int>();
        int version = h.at("format_version").get<int>();
        if (version != kCorpusFormatVersion) {
          throw ValidationError("unsupported corpus format_version " + std::to_string(version));
        }
      } catch (const json::exception& e) {
        throw ParseError(std::string("bad corpus header: ") + e.what(), line_number);
      }
      have_header = true;
      continue;
    }
    corpus.utterances.push_back(utterance_from_json_line(line, line_number));
  }
  if (have_header) validate_corpus(corpus);
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write corpus file: " + path.string());
  if (corpus.utterances.empty() && corpus.vocab_size == 0) {
    return;  // empty corpus round-trips to an empty file
  }
  out << header_json(corpus).dump() << '\n';
  for (const auto& utt : corpus.utterances) out << utterance_to_json_line(utt) << '\n';
}

}  // namespace prosody
