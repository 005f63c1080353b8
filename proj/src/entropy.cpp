#include "gwlz/entropy.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <queue>
#include <tuple>

#include <fmt/core.h>
#include <zlib.h>

#include "gwlz/byte_io.hpp"
#include "gwlz/error.hpp"

namespace gwlz {

namespace {

constexpr int kMaxCodeLength = 57;
constexpr int kFastBits = 11;

struct CanonicalCode {
  std::uint32_t symbol;
  std::uint8_t length;
  std::uint64_t code;
};

std::vector<CanonicalCode> assign_codes(std::vector<detail::CodeLength> lengths) {
  std::sort(lengths.begin(), lengths.end(), [](const auto& a, const auto& b) {
    return std::tie(a.length, a.symbol) < std::tie(b.length, b.symbol);
  });
  std::vector<CanonicalCode> out;
  out.reserve(lengths.size());
  std::uint64_t code = 0;
  int prev_len = lengths.empty() ? 0 : lengths.front().length;
  for (const auto& l : lengths) {
    code <<= (l.length - prev_len);
    prev_len = l.length;
    out.push_back({l.symbol, l.length, code});
    ++code;
  }
  return out;
}

class BitPacker {
 public:
  void put(std::uint64_t code, int len) {
    for (int b = len - 1; b >= 0; --b) {
      acc_ = static_cast<std::uint8_t>((acc_ << 1) | ((code >> b) & 1u));
      if (++fill_ == 8) {
        bytes_.push_back(acc_);
        acc_ = 0;
        fill_ = 0;
      }
    }
  }
  std::vector<std::uint8_t> finish() {
    if (fill_ > 0) bytes_.push_back(static_cast<std::uint8_t>(acc_ << (8 - fill_)));
    fill_ = 0;
    return std::move(bytes_);
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint8_t acc_ = 0;
  int fill_ = 0;
};

class BitStream {
 public:
  explicit BitStream(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t bit() {
    if (pos_ >= 8 * bytes_.size()) throw FormatError("code stream ended early");
    const std::uint32_t b = (bytes_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1u;
    ++pos_;
    return b;
  }
  /// Next n bits without consuming; zero-filled past the end.
  std::uint32_t peek(int n) const {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) {
      const std::size_t p = pos_ + static_cast<std::size_t>(i);
      const std::uint32_t b = p < 8 * bytes_.size() ? (bytes_[p >> 3] >> (7 - (p & 7))) & 1u : 0u;
      v = (v << 1) | b;
    }
    return v;
  }
  void skip(int n) {
    pos_ += static_cast<std::size_t>(n);
    if (pos_ > 8 * bytes_.size()) throw FormatError("code stream ended early");
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> deflate_bytes(std::span<const std::uint8_t> raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw FormatError("deflate failed");
  out.resize(bound);
  return out;
}

std::vector<std::uint8_t> inflate_bytes(std::span<const std::uint8_t> packed, std::uint64_t raw_size) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(raw_size));
  uLongf len = static_cast<uLongf>(raw_size);
  const int rc = uncompress(out.data(), &len, packed.data(), static_cast<uLong>(packed.size()));
  if (rc != Z_OK || len != raw_size) throw FormatError("inflate of code stream failed");
  return out;
}

}  // namespace

namespace detail {

std::vector<CodeLength> huffman_lengths(std::span<const std::pair<std::uint32_t, std::uint64_t>> freqs) {
  const std::size_t n = freqs.size();
  if (n == 0) return {};
  if (n == 1) return {{freqs[0].first, 1}};

  std::vector<std::uint64_t> weight(n);
  for (std::size_t i = 0; i < n; ++i) weight[i] = std::max<std::uint64_t>(freqs[i].second, 1);

  for (;;) {
    // Nodes 0..n-1 are leaves; internal nodes are appended. Ties break on node id.
    std::vector<std::size_t> parent(2 * n - 1, 0);
    using Entry = std::pair<std::uint64_t, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    for (std::size_t i = 0; i < n; ++i) heap.emplace(weight[i], i);
    std::size_t next = n;
    while (heap.size() > 1) {
      auto [wa, a] = heap.top();
      heap.pop();
      auto [wb, b] = heap.top();
      heap.pop();
      parent[a] = parent[b] = next;
      heap.emplace(wa + wb, next++);
    }
    const std::size_t root = next - 1;
    std::vector<int> depth(2 * n - 1, 0);
    for (std::size_t node = root; node-- > 0;) depth[node] = depth[parent[node]] + 1;

    std::vector<CodeLength> out(n);
    int max_len = 0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = {freqs[i].first, static_cast<std::uint8_t>(depth[i])};
      max_len = std::max(max_len, depth[i]);
    }
    if (max_len <= kMaxCodeLength) return out;
    // Flatten the distribution and rebuild until the depth limit holds.
    for (auto& w : weight) w = (w + 1) / 2;
  }
}

}  // namespace detail

std::vector<std::uint8_t> encode_symbols(std::span<const std::uint32_t> symbols) {
  std::map<std::uint32_t, std::uint64_t> hist;
  for (auto s : symbols) ++hist[s];
  std::vector<std::pair<std::uint32_t, std::uint64_t>> freqs(hist.begin(), hist.end());
  const auto codes = assign_codes(detail::huffman_lengths(freqs));

  std::map<std::uint32_t, std::pair<std::uint64_t, int>> table;
  for (const auto& c : codes) table[c.symbol] = {c.code, c.length};

  ByteWriter raw;
  raw.put_u64(symbols.size());
  raw.put_u32(static_cast<std::uint32_t>(codes.size()));
  for (const auto& c : codes) {
    raw.put_u32(c.symbol);
    raw.put_u8(c.length);
  }
  // Dense lookup for the common small-alphabet case.
  BitPacker bits;
  if (!codes.empty()) {
    const std::uint32_t max_sym = std::prev(table.end())->first;
    if (max_sym < (1u << 20)) {
      std::vector<std::pair<std::uint64_t, int>> dense(max_sym + 1, {0, 0});
      for (const auto& [s, c] : table) dense[s] = c;
      for (auto s : symbols) bits.put(dense[s].first, dense[s].second);
    } else {
      for (auto s : symbols) {
        const auto& c = table[s];
        bits.put(c.first, c.second);
      }
    }
  }
  raw.put_bytes(bits.finish());

  ByteWriter out;
  out.put_u64(raw.size());
  out.put_bytes(deflate_bytes(raw.bytes()));
  return out.take();
}

std::vector<std::uint32_t> decode_symbols(std::span<const std::uint8_t> stream) {
  ByteReader head(stream);
  const std::uint64_t raw_size = head.get_u64();
  // Deflate cannot expand beyond ~1032:1.
  if (raw_size > 1100 * static_cast<std::uint64_t>(stream.size()) + 64) throw FormatError("implausible code stream size");
  const auto raw_bytes = inflate_bytes(stream.subspan(head.position()), raw_size);
  ByteReader raw(raw_bytes);

  const std::uint64_t count = raw.get_u64();
  const std::uint32_t n_codes = raw.get_u32();
  if (count > 0 && n_codes == 0) throw FormatError("empty code table for non-empty stream");
  std::vector<detail::CodeLength> lengths(n_codes);
  for (auto& l : lengths) {
    l.symbol = raw.get_u32();
    l.length = raw.get_u8();
    if (l.length == 0 || l.length > kMaxCodeLength) throw FormatError("invalid code length in table");
  }
  const auto codes = assign_codes(lengths);
  // Kraft check: a canonical assignment of a valid table never overflows its length.
  for (const auto& c : codes)
    if (c.code >> c.length) throw FormatError("code table violates the prefix property");

  // Canonical decode tables per length.
  std::array<std::uint64_t, kMaxCodeLength + 2> first_code{};
  std::array<std::uint32_t, kMaxCodeLength + 2> len_count{};
  std::array<std::uint32_t, kMaxCodeLength + 2> first_index{};
  for (std::size_t i = codes.size(); i-- > 0;) {
    first_code[codes[i].length] = codes[i].code;
    first_index[codes[i].length] = static_cast<std::uint32_t>(i);
    ++len_count[codes[i].length];
  }
  struct Fast {
    std::uint32_t symbol;
    std::uint8_t length;
  };
  std::vector<Fast> fast(std::size_t{1} << kFastBits, Fast{0, 0});
  for (const auto& c : codes) {
    if (c.length > kFastBits) continue;
    const int pad = kFastBits - c.length;
    const std::uint64_t base = c.code << pad;
    for (std::uint64_t t = 0; t < (std::uint64_t{1} << pad); ++t) fast[base | t] = {c.symbol, c.length};
  }

  BitStream bits(raw_bytes);
  bits.skip(static_cast<int>(8 * raw.position()));
  std::vector<std::uint32_t> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, std::uint64_t{1} << 32)));
  for (std::uint64_t i = 0; i < count; ++i) {
    const Fast f = fast[bits.peek(kFastBits)];
    if (f.length != 0) {
      bits.skip(f.length);
      out.push_back(f.symbol);
      continue;
    }
    std::uint64_t code = 0;
    bool found = false;
    for (int len = 1; len <= kMaxCodeLength; ++len) {
      code = (code << 1) | bits.bit();
      if (len_count[len] != 0 && code >= first_code[len] && code - first_code[len] < len_count[len]) {
        out.push_back(codes[first_index[len] + (code - first_code[len])].symbol);
        found = true;
        break;
      }
    }
    if (!found) throw FormatError("invalid code in stream");
  }
  return out;
}

}  // namespace gwlz
