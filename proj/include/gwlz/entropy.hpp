#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gwlz {

/// Lossless coding of a symbol sequence: canonical prefix (Huffman) code
/// built from the symbol frequencies, table serialized in-stream, followed
/// by a deflate pass over the packed bits.
std::vector<std::uint8_t> encode_symbols(std::span<const std::uint32_t> symbols);

/// Inverse of encode_symbols. Throws FormatError on malformed input.
std::vector<std::uint32_t> decode_symbols(std::span<const std::uint8_t> stream);

namespace detail {

struct CodeLength {
  std::uint32_t symbol;
  std::uint8_t length;
};

/// Huffman code lengths for the given (symbol, frequency) pairs, sorted by
/// symbol. A single-symbol alphabet gets length 1.
std::vector<CodeLength> huffman_lengths(std::span<const std::pair<std::uint32_t, std::uint64_t>> freqs);

}  // namespace detail

}  // namespace gwlz
