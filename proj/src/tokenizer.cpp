#include "tabmlm/tokenizer.hpp"

#include <cctype>
#include <cstdio>

#include "tabmlm/common.hpp"

namespace tabmlm {
namespace {

bool is_punct_token(char c) { return c == ':' || c == ',' || c == '.'; }

std::string canonical_bytes(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    out += t;
    out += '\n';
  }
  return out;
}

}  // namespace

void Vocabulary::index_tokens() {
  ids_.reserve(tokens_.size() * 2);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = ids_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted)
      throw data_error("duplicate vocabulary token \"" + tokens_[i] + "\"");
  }
  hash_ = fnv1a64(canonical_bytes(tokens_));
}

Vocabulary Vocabulary::build() {
  Vocabulary v;
  v.tokens_.reserve(kVocabSize);
  v.tokens_ = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "column", ":", ",", "."};
  for (int i = 0; i <= 94; ++i) v.tokens_.push_back(std::to_string(i));
  v.tokens_.push_back("[MASK]");
  char buf[8];
  for (int i = 0; i <= 9999; ++i) {
    std::snprintf(buf, sizeof buf, "%04d", i);
    v.tokens_.push_back(buf);
  }
  v.index_tokens();
  return v;
}

Vocabulary Vocabulary::from_file(const std::string& path) {
  std::string bytes = read_file(path);
  Vocabulary v;
  std::size_t begin = 0;
  while (begin < bytes.size()) {
    std::size_t nl = bytes.find('\n', begin);
    std::size_t end = nl == std::string::npos ? bytes.size() : nl;
    if (end == begin)
      throw data_error(path + ": empty line at id " +
                       std::to_string(v.tokens_.size()));
    v.tokens_.emplace_back(bytes, begin, end - begin);
    begin = nl == std::string::npos ? bytes.size() : nl + 1;
  }
  if (v.tokens_.empty()) throw data_error(path + ": empty vocabulary");
  v.index_tokens();
  return v;
}

void Vocabulary::save(const std::string& path) const {
  write_file(path, canonical_bytes(tokens_));
}

std::optional<TokenId> Vocabulary::lookup(std::string_view token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id_or_unk(std::string_view token) const {
  return lookup(token).value_or(kUnkId);
}

const std::string& Vocabulary::token_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw data_error("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> encode(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(vocab.id_or_unk(word));
      word.clear();
    }
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (is_punct_token(c)) {
      flush();
      out.push_back(vocab.id_or_unk(std::string_view(&c, 1)));
    } else {
      word += c;
    }
  }
  flush();
  return out;
}

std::string decode(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
  std::string out;
  bool glue_next = false;  // previous token was "."
  for (TokenId id : ids) {
    if (id == kPadId) continue;
    const std::string& t = vocab.token_of(id);
    bool glue_here = t.size() == 1 && is_punct_token(t[0]);
    if (!out.empty() && !glue_here && !glue_next) out += ' ';
    out += t;
    glue_next = (t == ".");
  }
  return out;
}

std::size_t TokenTriple::real_len() const {
  std::size_t n = 0;
  while (n < attention_mask.size() && attention_mask[n]) ++n;
  return n;
}

TokenTriple make_triple(const std::vector<TokenId>& ids, std::size_t max_len) {
  std::size_t need = ids.size() + 2;
  if (need > max_len)
    throw data_error("row needs " + std::to_string(need) +
                     " tokens, exceeds sequence length " +
                     std::to_string(max_len));
  TokenTriple t;
  t.input_ids.assign(max_len, kPadId);
  t.attention_mask.assign(max_len, 0);
  t.labels.assign(max_len, kIgnoreLabel);
  t.input_ids[0] = kClsId;
  for (std::size_t i = 0; i < ids.size(); ++i) t.input_ids[i + 1] = ids[i];
  t.input_ids[ids.size() + 1] = kSepId;
  for (std::size_t i = 0; i < need; ++i) t.attention_mask[i] = 1;
  return t;
}

}  // namespace tabmlm
