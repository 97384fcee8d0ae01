#include "cng/embedding/corpus.hpp"

#include <zlib.h>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "cng/core/errors.hpp"
#include "cng/core/rng.hpp"

namespace cng {
namespace {

bool is_gzip(const std::filesystem::path& path) { return path.extension() == ".gz"; }

void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  out.append(buf, end);
}

void append_vector(std::string& out, std::span<const double> values) {
  out += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    append_number(out, values[i]);
  }
  out += ']';
}

std::vector<double> parse_vector(const nlohmann::json& j, std::size_t line, const char* field) {
  if (!j.is_array()) throw ParseError(line, std::string("field '") + field + "' must be an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw ParseError(line, std::string("field '") + field + "' contains a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

TokenSequence parse_document(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, "record is not a JSON object");
  for (const char* key : {"doc_id", "label", "cls", "tokens"}) {
    if (!j.contains(key)) throw ParseError(line, std::string("missing field '") + key + "'");
  }
  TokenSequence doc;
  if (!j["doc_id"].is_string()) throw ParseError(line, "doc_id must be a string");
  doc.doc_id = j["doc_id"].get<std::string>();
  if (!j["label"].is_number_integer()) throw ParseError(line, "label must be 0 or 1");
  doc.label = j["label"].get<int>();
  if (j.contains("lang")) doc.lang = j["lang"].get<std::string>();
  doc.cls = parse_vector(j["cls"], line, "cls");
  const auto& toks = j["tokens"];
  if (!toks.is_array()) throw ParseError(line, "field 'tokens' must be an array of vectors");
  const std::size_t width = doc.cls.size();
  std::vector<double> flat;
  flat.reserve(toks.size() * width);
  for (const auto& t : toks) {
    auto v = parse_vector(t, line, "tokens");
    if (v.size() != width) {
      throw SchemaError("line " + std::to_string(line) + ": token width " + std::to_string(v.size()) +
                        " differs from cls width " + std::to_string(width));
    }
    flat.insert(flat.end(), v.begin(), v.end());
  }
  doc.tokens = Tensor({toks.size(), width}, std::move(flat));
  if (j.contains("words")) doc.words = j["words"].get<std::vector<std::string>>();
  if (j.contains("trigger_positions")) doc.trigger_positions = j["trigger_positions"].get<std::vector<std::size_t>>();
  return doc;
}

}  // namespace

const char* to_string(Provenance p) noexcept { return p == Provenance::toy ? "toy" : "external"; }

std::size_t Corpus::count_label(int label) const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.label == label;
  return n;
}

void Corpus::add(TokenSequence doc) {
  if (doc.label != kLabelCritical && doc.label != kLabelConspiracy) {
    throw SchemaError("document '" + doc.doc_id + "': label must be 0 or 1");
  }
  if (doc.tokens.rank() != 2 || (doc.tokens.rows() > 0 && doc.tokens.cols() != doc.width())) {
    throw SchemaError("document '" + doc.doc_id + "': token width differs from cls width");
  }
  if (width && *width != doc.width()) {
    throw SchemaError("document '" + doc.doc_id + "': width " + std::to_string(doc.width()) +
                      " differs from corpus width " + std::to_string(*width));
  }
  for (const auto& d : documents) {
    if (d.doc_id == doc.doc_id) throw SchemaError("duplicate doc_id '" + doc.doc_id + "'");
  }
  width = doc.width();
  documents.push_back(std::move(doc));
}

Corpus parse_corpus(std::string_view text) {
  Corpus corpus;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("header") && !j.contains("doc_id")) {
      if (!corpus.documents.empty()) throw ParseError(line_no, "header record must precede documents");
      corpus.header = j["header"];
      if (corpus.header.contains("provenance")) {
        corpus.provenance = corpus.header["provenance"] == "toy" ? Provenance::toy : Provenance::external;
      }
      continue;
    }
    TokenSequence doc = parse_document(j, line_no);
    if (!seen.insert(doc.doc_id).second) {
      throw SchemaError("line " + std::to_string(line_no) + ": duplicate doc_id '" + doc.doc_id + "'");
    }
    if (doc.label != kLabelCritical && doc.label != kLabelConspiracy) {
      throw SchemaError("line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    if (corpus.width && *corpus.width != doc.width()) {
      throw SchemaError("line " + std::to_string(line_no) + ": width " + std::to_string(doc.width()) +
                        " differs from corpus width " + std::to_string(*corpus.width));
    }
    corpus.width = doc.width();
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

std::string read_text_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  if (is_gzip(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path.string());
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw IoError("gzip read failure in " + path.string());
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (is_gzip(path)) {
    // zlib writes a fixed header (no name, zero mtime), so output is byte-stable.
    gzFile f = gzopen(path.c_str(), "wb9");
    if (!f) throw IoError("cannot write " + path.string());
    const int written = gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    gzclose(f);
    if (written != static_cast<int>(text.size())) throw IoError("gzip write failure in " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failure in " + path.string());
}

Corpus load_corpus(const std::filesystem::path& path) { return parse_corpus(read_text_file(path)); }

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  nlohmann::json header = corpus.header.is_object() ? corpus.header : nlohmann::json::object();
  header["provenance"] = to_string(corpus.provenance);
  out += nlohmann::json{{"header", header}}.dump();
  out += '\n';
  for (const auto& d : corpus.documents) {
    out += "{\"doc_id\":" + nlohmann::json(d.doc_id).dump();
    out += ",\"label\":" + std::to_string(d.label);
    out += ",\"lang\":" + nlohmann::json(d.lang).dump();
    out += ",\"cls\":";
    append_vector(out, d.cls);
    out += ",\"tokens\":[";
    for (std::size_t r = 0; r < d.length(); ++r) {
      if (r) out += ',';
      append_vector(out, d.tokens.row(r));
    }
    out += ']';
    if (!d.words.empty()) out += ",\"words\":" + nlohmann::json(d.words).dump();
    if (!d.trigger_positions.empty()) out += ",\"trigger_positions\":" + nlohmann::json(d.trigger_positions).dump();
    out += "}\n";
  }
  return out;
}

void export_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_text_file(path, serialize_corpus(corpus));
}

TokenSequence toy_embed(std::span<const std::string> words, std::size_t width, std::uint64_t seed) {
  if (width < 8) throw ParameterError("toy embedder width must be at least 8");
  const Rng root(seed);
  const Rng token_root = root.derive("token");
  const Rng position_root = root.derive("position");

  TokenSequence seq;
  seq.words.assign(words.begin(), words.end());
  seq.cls.assign(width, 0.0);
  seq.tokens = Tensor({words.size(), width});
  for (std::size_t p = 0; p < words.size(); ++p) {
    Rng word_rng = token_root.derive(words[p]);
    Rng pos_rng = position_root.derive(std::min(p / kToyPositionBucket, kToyPositionBuckets - 1));
    for (std::size_t c = 0; c < width; ++c) {
      const double v = word_rng.normal() + kToyPositionScale * pos_rng.normal();
      seq.tokens(p, c) = v;
      seq.cls[c] += v;
    }
  }
  if (!words.empty()) {
    for (auto& v : seq.cls) v /= static_cast<double>(words.size());
  }
  return seq;
}

}  // namespace cng
