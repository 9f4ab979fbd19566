// Copyright 2026 The lddscan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Symbol sequences and the loaders that produce them: text files tokenized
// by byte, UTF-8 code point or whitespace-separated word, and IDX image files
// flattened row-major into one sequence per image.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lddscan/error.hpp"

namespace lddscan {

using SymbolId = std::uint32_t;
using Sequence = std::vector<SymbolId>;

enum class TokenMode { byte, character, word, pixel };

inline std::string_view to_string(TokenMode mode) {
  switch (mode) {
    case TokenMode::byte: return "byte";
    case TokenMode::character: return "char";
    case TokenMode::word: return "word";
    case TokenMode::pixel: return "pixel";
  }
  return "byte";
}

inline TokenMode parse_token_mode(std::string_view name) {
  if (name == "byte") return TokenMode::byte;
  if (name == "char") return TokenMode::character;
  if (name == "word") return TokenMode::word;
  if (name == "pixel") return TokenMode::pixel;
  throw Error(errc::usage, "unknown tokenization mode '" + std::string(name) + "'");
}

struct ImageShape {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;

  std::size_t pixels() const { return std::size_t{rows} * cols; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// An immutable population of symbol sequences over one alphabet.
///
/// For text modes `units()` holds the byte string of every symbol id, so
/// `decode` reverses tokenization exactly. Pixel corpora use raw byte values
/// as ids and carry the image shape needed to re-encode them as IDX.
class Corpus {
 public:
  Corpus(std::vector<Sequence> sequences, std::size_t alphabet_size, TokenMode mode,
         std::string source_meta, std::vector<std::string> units = {},
         std::optional<ImageShape> shape = std::nullopt)
      : sequences_(std::move(sequences)),
        alphabet_size_(alphabet_size),
        mode_(mode),
        source_meta_(std::move(source_meta)),
        units_(std::move(units)),
        shape_(shape) {
    if (alphabet_size_ == 0) throw Error(errc::data, "corpus alphabet is empty");
    if ((mode_ == TokenMode::byte || mode_ == TokenMode::pixel) && alphabet_size_ > 256)
      throw Error(errc::data, "byte and pixel corpora have at most 256 symbols");
    if (sequences_.empty()) throw Error(errc::data, "corpus has no sequences");
    if (!units_.empty() && units_.size() != alphabet_size_)
      throw Error(errc::data, "unit table does not match alphabet size");
    for (const auto& seq : sequences_) {
      if (seq.empty()) throw Error(errc::data, "corpus contains an empty sequence");
      for (SymbolId s : seq)
        if (s >= alphabet_size_) throw Error(errc::data, "symbol id outside alphabet");
      if (shape_ && seq.size() != shape_->pixels())
        throw Error(errc::data, "image sequence does not match image shape");
    }
  }

  const std::vector<Sequence>& sequences() const { return sequences_; }
  std::size_t alphabet_size() const { return alphabet_size_; }
  TokenMode mode() const { return mode_; }
  const std::string& source_meta() const { return source_meta_; }
  const std::vector<std::string>& units() const { return units_; }
  const std::optional<ImageShape>& image_shape() const { return shape_; }

  std::size_t longest_sequence() const {
    std::size_t n = 0;
    for (const auto& seq : sequences_) n = std::max(n, seq.size());
    return n;
  }

  std::size_t total_symbols() const {
    std::size_t n = 0;
    for (const auto& seq : sequences_) n += seq.size();
    return n;
  }

  /// Reconstructs the original text of sequence `index`; words are rejoined
  /// with single spaces.
  std::string decode(std::size_t index = 0) const {
    if (units_.empty()) throw Error(errc::usage, "corpus has no unit table to decode with");
    std::string out;
    const auto& seq = sequences_.at(index);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (mode_ == TokenMode::word && i > 0) out.push_back(' ');
      out += units_[seq[i]];
    }
    return out;
  }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.sequences_ == b.sequences_ && a.alphabet_size_ == b.alphabet_size_ &&
           a.mode_ == b.mode_ && a.units_ == b.units_ && a.shape_ == b.shape_;
  }

 private:
  std::vector<Sequence> sequences_;
  std::size_t alphabet_size_;
  TokenMode mode_;
  std::string source_meta_;
  std::vector<std::string> units_;
  std::optional<ImageShape> shape_;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::data, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(errc::data, "error reading '" + path.string() + "'");
  return bytes;
}

// Length of the UTF-8 sequence starting at text[pos], or 0 when it is not a
// well-formed scalar value (overlong forms, surrogates and values above
// U+10FFFF are rejected).
inline std::size_t utf8_length(std::string_view text, std::size_t pos) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
  const unsigned char lead = byte(pos);
  std::size_t len = 0;
  std::uint32_t cp = 0;
  if (lead < 0x80) return 1;
  if (lead >= 0xC2 && lead <= 0xDF) { len = 2; cp = lead & 0x1F; }
  else if (lead >= 0xE0 && lead <= 0xEF) { len = 3; cp = lead & 0x0F; }
  else if (lead >= 0xF0 && lead <= 0xF4) { len = 4; cp = lead & 0x07; }
  else return 0;
  if (pos + len > text.size()) return 0;
  for (std::size_t i = 1; i < len; ++i) {
    const unsigned char c = byte(pos + i);
    if ((c & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (c & 0x3F);
  }
  if (len == 3 && (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF))) return 0;
  if (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) return 0;
  return len;
}

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

// Assigns ids to units in order of first occurrence.
class Vocabulary {
 public:
  SymbolId intern(std::string_view unit) {
    auto it = index_.find(std::string(unit));
    if (it != index_.end()) return it->second;
    const auto id = static_cast<SymbolId>(units_.size());
    units_.emplace_back(unit);
    index_.emplace(units_.back(), id);
    return id;
  }

  std::vector<std::string> release() && { return std::move(units_); }
  std::size_t size() const { return units_.size(); }

 private:
  std::unordered_map<std::string, SymbolId> index_;
  std::vector<std::string> units_;
};

inline std::uint32_t read_be32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i)
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

inline void write_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

}  // namespace detail

/// Tokenizes in-memory text. `source` is recorded as provenance.
inline Corpus tokenize_text(std::string_view text, TokenMode mode, std::string source = "<memory>") {
  if (mode == TokenMode::pixel) throw Error(errc::usage, "pixel mode requires an IDX image file");
  if (text.empty()) throw Error(errc::data, "input '" + source + "' is empty");

  Sequence seq;
  std::vector<std::string> units;
  switch (mode) {
    case TokenMode::byte: {
      // Byte-indexed table instead of hashing: PTB-sized inputs are millions of bytes.
      std::array<std::int32_t, 256> ids;
      ids.fill(-1);
      seq.reserve(text.size());
      for (char c : text) {
        auto& id = ids[static_cast<unsigned char>(c)];
        if (id < 0) {
          id = static_cast<std::int32_t>(units.size());
          units.emplace_back(1, c);
        }
        seq.push_back(static_cast<SymbolId>(id));
      }
      break;
    }
    case TokenMode::character: {
      detail::Vocabulary vocab;
      seq.reserve(text.size());
      for (std::size_t pos = 0; pos < text.size();) {
        const std::size_t len = detail::utf8_length(text, pos);
        if (len == 0)
          throw Error(errc::data, "invalid UTF-8 in '" + source + "' at byte offset " +
                                      std::to_string(pos));
        seq.push_back(vocab.intern(text.substr(pos, len)));
        pos += len;
      }
      units = std::move(vocab).release();
      break;
    }
    case TokenMode::word: {
      detail::Vocabulary vocab;
      std::size_t pos = 0;
      while (pos < text.size()) {
        while (pos < text.size() && detail::is_ascii_space(text[pos])) ++pos;
        const std::size_t start = pos;
        while (pos < text.size() && !detail::is_ascii_space(text[pos])) ++pos;
        if (pos > start) seq.push_back(vocab.intern(text.substr(start, pos - start)));
      }
      if (seq.empty()) throw Error(errc::data, "input '" + source + "' contains no words");
      units = std::move(vocab).release();
      break;
    }
    case TokenMode::pixel:
      break;
  }
  const std::size_t alphabet = units.size();
  std::vector<Sequence> seqs;
  seqs.push_back(std::move(seq));
  return Corpus(std::move(seqs), alphabet, mode,
                "path=" + source + ";mode=" + std::string(to_string(mode)), std::move(units));
}

inline Corpus load_text(const std::filesystem::path& path, TokenMode mode) {
  return tokenize_text(detail::read_file(path), mode, path.string());
}

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

/// Parses an IDX image file held in memory: magic 0x00000803 followed by
/// big-endian image count, rows and columns, then one unsigned byte per pixel.
inline Corpus parse_idx_images(std::string_view bytes, std::string source = "<memory>") {
  constexpr std::size_t kHeader = 16;
  if (bytes.size() < kHeader)
    throw Error(errc::data, "'" + source + "' is too short for an IDX image header");
  const std::uint32_t magic = detail::read_be32(bytes, 0);
  if (magic != kIdxImageMagic) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", magic);
    throw Error(errc::data, "'" + source + "' has IDX magic " + buf + ", expected 0x00000803");
  }
  const std::uint32_t count = detail::read_be32(bytes, 4);
  const ImageShape shape{detail::read_be32(bytes, 8), detail::read_be32(bytes, 12)};
  if (count == 0 || shape.pixels() == 0)
    throw Error(errc::data, "'" + source + "' declares no pixels");
  const std::size_t payload = bytes.size() - kHeader;
  const std::size_t per_image = shape.pixels();
  if (payload / per_image < count)
    throw Error(errc::data, "'" + source + "' is truncated: header declares " +
                                std::to_string(count) + " images of " +
                                std::to_string(per_image) + " pixels, payload has " +
                                std::to_string(payload) + " bytes");
  if (payload != std::size_t{count} * per_image)
    throw Error(errc::data, "'" + source + "' has trailing bytes after the declared images");

  std::vector<Sequence> seqs(count);
  const auto* pixels = reinterpret_cast<const unsigned char*>(bytes.data() + kHeader);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* first = pixels + i * per_image;
    seqs[i].assign(first, first + per_image);
  }
  return Corpus(std::move(seqs), 256, TokenMode::pixel,
                "path=" + source + ";mode=pixel;images=" + std::to_string(count) + ";shape=" +
                    std::to_string(shape.rows) + "x" + std::to_string(shape.cols),
                {}, shape);
}

inline Corpus load_idx_images(const std::filesystem::path& path) {
  return parse_idx_images(detail::read_file(path), path.string());
}

/// Serializes a pixel corpus back to IDX bytes (the inverse of parse_idx_images).
inline std::string encode_idx_images(const Corpus& corpus) {
  if (corpus.mode() != TokenMode::pixel || !corpus.image_shape())
    throw Error(errc::usage, "only pixel corpora with an image shape can be written as IDX");
  const ImageShape shape = *corpus.image_shape();
  std::string out;
  out.reserve(16 + corpus.total_symbols());
  detail::write_be32(out, kIdxImageMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(corpus.sequences().size()));
  detail::write_be32(out, shape.rows);
  detail::write_be32(out, shape.cols);
  for (const auto& seq : corpus.sequences())
    for (SymbolId s : seq) out.push_back(static_cast<char>(static_cast<unsigned char>(s)));
  return out;
}

inline void write_idx_images(const Corpus& corpus, const std::filesystem::path& path) {
  const std::string bytes = encode_idx_images(corpus);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(errc::data, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(errc::data, "error writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Position permutations

struct PermutationSpec {
  std::uint64_t seed = 0;
  std::size_t length = 0;
};

namespace detail {

// Unbiased draw from [0, bound) by rejection; std::uniform_int_distribution
// is implementation-defined and would make permutations library-dependent.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

}  // namespace detail

/// Fisher-Yates shuffle of [0, length) driven by std::mt19937_64 seeded with
/// `spec.seed`. Position i of a permuted sequence receives the symbol at
/// position perm[i] of the original.
inline std::vector<std::size_t> make_permutation(const PermutationSpec& spec) {
  std::vector<std::size_t> perm(spec.length);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = perm.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(detail::bounded_draw(rng, i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

inline std::vector<std::size_t> invert_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inverse(perm.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || inverse[perm[i]] != std::numeric_limits<std::size_t>::max())
      throw Error(errc::usage, "not a permutation");
    inverse[perm[i]] = i;
  }
  return inverse;
}

/// Applies one position permutation to every sequence; `note` is appended to
/// the provenance.
inline Corpus apply_permutation(const Corpus& corpus, std::span<const std::size_t> perm,
                                const std::string& note) {
  std::vector<Sequence> out;
  out.reserve(corpus.sequences().size());
  for (const auto& seq : corpus.sequences()) {
    if (seq.size() != perm.size())
      throw Error(errc::usage, "sequence length " + std::to_string(seq.size()) +
                                   " does not match permutation length " +
                                   std::to_string(perm.size()));
    Sequence permuted(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) permuted[i] = seq[perm[i]];
    out.push_back(std::move(permuted));
  }
  return Corpus(std::move(out), corpus.alphabet_size(), corpus.mode(),
                corpus.source_meta() + ";" + note, corpus.units(), corpus.image_shape());
}

inline Corpus permute(const Corpus& corpus, const PermutationSpec& spec) {
  const auto perm = make_permutation(spec);
  return apply_permutation(corpus, perm,
                           "permutation=fisher-yates/mt19937_64;seed=" + std::to_string(spec.seed));
}

}  // namespace lddscan
