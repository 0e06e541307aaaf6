#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "quicshare/bytes.hpp"
#include "quicshare/groups.hpp"
#include "quicshare/ip.hpp"

namespace quicshare::token {

// Wire layout, big-endian throughout:
//   version(1) | group_id(16) | client_ip(16) | issued_at_ms(8) | nonce(16) | tag(32)
// tag = HMAC-SHA256(group secret, preceding 57 bytes).
inline constexpr std::uint8_t kTokenVersion = 0x01;
inline constexpr std::size_t kGroupIdSize = 16;
inline constexpr std::size_t kNonceSize = 16;
inline constexpr std::size_t kTagSize = 32;
inline constexpr std::size_t kAuthenticatedPrefixSize = 1 + kGroupIdSize + 16 + 8 + kNonceSize;
inline constexpr std::size_t kTokenSize = kAuthenticatedPrefixSize + kTagSize;  // 89

inline constexpr std::int64_t kDefaultMaxAgeMs = 600'000;  // ten minutes

using Nonce = std::array<std::uint8_t, kNonceSize>;

struct GroupSecret {
  std::array<std::uint8_t, 32> key{};
};

struct TokenFields {
  std::uint8_t version = kTokenVersion;
  groups::GroupId group_id;
  IpAddress client_ip;
  std::int64_t issued_at_ms = 0;
  Nonce nonce{};
};

enum class RejectReason : std::uint8_t {
  BadLength,
  BadVersion,
  BadTag,
  IpMismatch,
  Expired,
  Replayed,
};

std::string_view reject_reason_name(RejectReason reason);

struct ValidationResult {
  bool accepted = false;
  std::optional<RejectReason> reason;
  std::optional<TokenFields> fields;  // set whenever the token parsed

  static ValidationResult accept(TokenFields f) { return {true, std::nullopt, std::move(f)}; }
  static ValidationResult reject(RejectReason r, std::optional<TokenFields> f = std::nullopt) {
    return {false, r, std::move(f)};
  }
};

/// Deterministic byte source for nonces and simulation randomness.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

  void fill(std::span<std::uint8_t> out);
  Nonce next_nonce();
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Single-use enforcement: one accepted nonce per group, forever. The store
/// is unbounded here; a real deployment would evict nonces older than the
/// token lifetime window, which a finite simulation run does not need.
class ReplayStore {
 public:
  /// Atomically records the nonce; returns false if it was already present.
  bool check_and_record(const groups::GroupId& group, const Nonce& nonce);
  bool seen(const groups::GroupId& group, const Nonce& nonce) const;
  std::size_t size() const;

 private:
  struct NonceHash {
    std::size_t operator()(const Nonce& n) const noexcept;
  };
  std::unordered_map<groups::GroupId, std::unordered_set<Nonce, NonceHash>, groups::GroupIdHash>
      seen_;
};

/// Deterministic encode from explicit fields (nonce supplied by the caller).
Bytes make_token(const GroupSecret& secret, const TokenFields& fields);

/// Issues a fresh token for the claimed address, drawing the nonce from `rng`.
Bytes issue_token(const GroupSecret& secret, const groups::GroupId& group, const IpAddress& client_ip,
                  std::int64_t now_ms, RandomSource& rng);

enum class DecodeError : std::uint8_t { BadLength, BadVersion };

/// Pure parse, no authenticity check. Diagnostics only.
std::optional<TokenFields> decode_token(std::span<const std::uint8_t> token_bytes,
                                        DecodeError* error = nullptr);

/// Full validation. Checks, in order: length, version, tag, address match,
/// age (now - issued_at <= max_age_ms), single use. On accept the nonce is
/// recorded in `replay`.
ValidationResult validate_token(const GroupSecret& secret, std::span<const std::uint8_t> token_bytes,
                                const IpAddress& claimed_ip, std::int64_t now_ms,
                                std::int64_t max_age_ms, ReplayStore& replay);

}  // namespace quicshare::token
