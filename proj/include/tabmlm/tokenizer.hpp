#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tabmlm {

using TokenId = std::int32_t;

// Fixed vocabulary layout. The four-digit value tokens "0000".."9999" sit in
// one contiguous block so imputation can restrict argmax to [kFirstValueId,
// kLastValueId] with plain index arithmetic.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr TokenId kMaskId = 103;
inline constexpr TokenId kFirstValueId = 104;
inline constexpr TokenId kLastValueId = 10103;
inline constexpr std::size_t kVocabSize = 10104;

// Label value for positions that do not contribute to the loss.
inline constexpr std::int32_t kIgnoreLabel = -100;

class Vocabulary {
 public:
  // Canonical fixed vocabulary: [PAD] [UNK] [CLS] [SEP], "column", ":", ",",
  // ".", integers "0".."94", [MASK] at 103, then "0000".."9999".
  static Vocabulary build();
  static Vocabulary from_file(const std::string& path);

  // One token per line, LF endings, line number = id.
  void save(const std::string& path) const;

  std::optional<TokenId> lookup(std::string_view token) const;
  TokenId id_or_unk(std::string_view token) const;
  const std::string& token_of(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }

  // FNV-1a 64 over the canonical file bytes; stored in checkpoints so a
  // model is never paired with a different token layout.
  std::uint64_t hash() const { return hash_; }

 private:
  struct TransparentHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };
  Vocabulary() = default;
  void index_tokens();
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId, TransparentHash, std::equal_to<>>
      ids_;
  std::uint64_t hash_ = 0;
};

// Whitespace splits; ':' ',' '.' are single-char tokens; everything else is
// an exact-match word (unknown words become [UNK]). No case folding.
std::vector<TokenId> encode(std::string_view text, const Vocabulary& vocab);

// Inverse joiner: no space before ':' ',' '.', no space after '.'.
std::string decode(const std::vector<TokenId>& ids, const Vocabulary& vocab);

// Model input for one row: [CLS] ids [SEP], right-padded with [PAD].
struct TokenTriple {
  std::vector<TokenId> input_ids;
  std::vector<std::uint8_t> attention_mask;  // 1 = real token, 0 = padding
  std::vector<std::int32_t> labels;          // kIgnoreLabel except mask targets

  std::size_t seq_len() const { return input_ids.size(); }
  std::size_t real_len() const;
};

TokenTriple make_triple(const std::vector<TokenId>& ids, std::size_t max_len);

}  // namespace tabmlm
