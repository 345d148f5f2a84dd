#pragma once

// Bit-packed occupation configurations η ∈ {0,1}^{V_m}.

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sep/common.hpp"
#include "sep/quotient_graph.hpp"

namespace sep {

class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::size_t sites) : sites_(sites), words_((sites + 63) / 64, 0) {}

  /// "1010" lists η_0, η_1, ... left to right.
  static Configuration from_bits(std::string_view bits) {
    Configuration c(bits.size());
    for (std::size_t x = 0; x < bits.size(); ++x) {
      if (bits[x] == '1') {
        c.set(x, true);
      } else if (bits[x] != '0') {
        throw ConfigError("configuration bit string may only contain 0 and 1");
      }
    }
    return c;
  }

  /// Bit x of `index` is η_x (the state-index convention of small measures).
  static Configuration from_index(std::uint64_t index, std::size_t sites) {
    Configuration c(sites);
    if (sites > 0) c.words_[0] = sites >= 64 ? index : index & ((std::uint64_t{1} << sites) - 1);
    return c;
  }

  std::size_t size() const { return sites_; }

  bool operator[](std::size_t x) const { return (words_[x >> 6] >> (x & 63)) & 1U; }

  void set(std::size_t x, bool v) {
    const std::uint64_t mask = std::uint64_t{1} << (x & 63);
    if (v) {
      words_[x >> 6] |= mask;
    } else {
      words_[x >> 6] &= ~mask;
    }
  }

  void flip(std::size_t x) { words_[x >> 6] ^= std::uint64_t{1} << (x & 63); }

  std::size_t particle_count() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  std::uint64_t index() const {
    if (sites_ > 64) throw CapExceeded("state index needs at most 64 sites");
    return words_.empty() ? 0 : words_[0];
  }

  std::string bits() const {
    std::string s(sites_, '0');
    for (std::size_t x = 0; x < sites_; ++x) s[x] = (*this)[x] ? '1' : '0';
    return s;
  }

  /// Hex of the bit-packing: words low to high, each as 16 hex digits
  /// (most significant nibble first), trimmed to ceil(sites/4) digits.
  std::string hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    const std::size_t nibbles = (sites_ + 3) / 4;
    std::string out(nibbles, '0');
    for (std::size_t k = 0; k < nibbles; ++k) {
      const std::uint64_t w = words_[(4 * k) >> 6];
      out[nibbles - 1 - k] = digits[(w >> ((4 * k) & 63)) & 0xF];
    }
    return out;
  }

  static Configuration from_hex(std::string_view hex, std::size_t sites) {
    if (hex.size() != (sites + 3) / 4) throw ConfigError("hex configuration has wrong length");
    Configuration c(sites);
    const std::size_t nibbles = hex.size();
    for (std::size_t k = 0; k < nibbles; ++k) {
      const char ch = hex[nibbles - 1 - k];
      std::uint64_t v;
      if (ch >= '0' && ch <= '9') {
        v = static_cast<std::uint64_t>(ch - '0');
      } else if (ch >= 'a' && ch <= 'f') {
        v = static_cast<std::uint64_t>(ch - 'a' + 10);
      } else if (ch >= 'A' && ch <= 'F') {
        v = static_cast<std::uint64_t>(ch - 'A' + 10);
      } else {
        throw ConfigError("invalid hex digit in configuration");
      }
      for (int b = 0; b < 4; ++b) {
        const std::size_t x = 4 * k + b;
        if ((v >> b) & 1U) {
          if (x >= sites) throw ConfigError("hex configuration sets bits beyond its size");
          c.set(x, true);
        }
      }
    }
    return c;
  }

  const std::vector<std::uint64_t>& words() const { return words_; }

  friend bool operator==(const Configuration&, const Configuration&) = default;

 private:
  std::size_t sites_ = 0;
  std::vector<std::uint64_t> words_;
};

/// η^{xy}: exchange the values at x and y.
inline Configuration pair_swap(Configuration eta, Vertex x, Vertex y) {
  if (eta[x] != eta[y]) {
    eta.flip(x);
    eta.flip(y);
  }
  return eta;
}

/// η^e: exchange the values at the endpoints of e.
inline Configuration swap(const Configuration& eta, const QuotientGraph& graph, std::size_t e) {
  const auto& edge = graph.edge(e);
  return pair_swap(eta, edge.origin, edge.terminus);
}

/// (ι_m η)_z = η_{π_m(z)} for z in a window of the Cayley graph.
inline std::vector<bool> periodic_lift(const Configuration& eta, const QuotientGraph& graph,
                                       const std::vector<Element>& window) {
  std::vector<bool> out(window.size());
  for (std::size_t j = 0; j < window.size(); ++j) out[j] = eta[graph.vertex_of(window[j])];
  return out;
}

/// (σ η)_z = η_{σ^{-1} z} for a vertex permutation `perm` realising σ.
inline Configuration act(const std::vector<Vertex>& perm, const Configuration& eta) {
  Configuration out(eta.size());
  for (std::size_t x = 0; x < eta.size(); ++x) {
    if (eta[x]) out.set(perm[x], true);
  }
  return out;
}

/// Same action on state indices (bit x of the index is η_x).
inline std::uint64_t act_on_index(const std::vector<Vertex>& perm, std::uint64_t state) {
  std::uint64_t out = 0;
  while (state) {
    const int x = std::countr_zero(state);
    out |= std::uint64_t{1} << perm[x];
    state &= state - 1;
  }
  return out;
}

}  // namespace sep
