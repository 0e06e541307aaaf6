#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <unordered_map>

#include "quicshare/bytes.hpp"
#include "quicshare/groups.hpp"

namespace quicshare::cache {

struct CacheEntry {
  groups::GroupId group;
  Bytes token;
  std::int64_t received_at_ms = 0;
  std::string source_host;  // diagnostic only
};

/// Client-side token store keyed by validation group. FIFO per group so the
/// oldest usable token is spent first; entries past `lifetime_ms` are never
/// returned and are dropped when encountered.
class TokenCache {
 public:
  static constexpr std::int64_t kDefaultLifetimeMs = 600'000;

  explicit TokenCache(std::int64_t lifetime_ms = kDefaultLifetimeMs) : lifetime_ms_(lifetime_ms) {}

  void store(const groups::GroupId& group, Bytes token, std::int64_t now_ms,
             std::string source_host = {});

  /// Returns and removes the oldest unexpired token for the group, if any.
  std::optional<Bytes> take(const groups::GroupId& group, std::int64_t now_ms);

  /// Drops every expired entry. The lazy path in take() makes this optional;
  /// the harness calls it for deterministic snapshots.
  void evict_expired(std::int64_t now_ms);

  std::size_t size() const;
  std::size_t count(const groups::GroupId& group) const;
  std::int64_t lifetime_ms() const { return lifetime_ms_; }

  std::string snapshot_json(std::int64_t now_ms) const;

 private:
  bool expired(const CacheEntry& e, std::int64_t now_ms) const {
    return now_ms - e.received_at_ms > lifetime_ms_;
  }

  std::int64_t lifetime_ms_;
  std::unordered_map<groups::GroupId, std::deque<CacheEntry>, groups::GroupIdHash> entries_;
};

/// Group a connection's received tokens belong to: the certificate's group
/// when the server announced cross-host validation, otherwise the degenerate
/// per-hostname group of `fallback_host` (default behavior).
groups::GroupId group_for_connection(const groups::Certificate& anchor_cert, int group_bit,
                                     const std::string& fallback_host);

/// Everything a client remembers across connections: banked tokens, which
/// group each hostname was last seen in, certificates, and resumption tickets.
class ClientStore {
 public:
  explicit ClientStore(std::int64_t lifetime_ms = TokenCache::kDefaultLifetimeMs)
      : tokens_(lifetime_ms) {}

  TokenCache& tokens() { return tokens_; }
  const TokenCache& tokens() const { return tokens_; }

  std::optional<groups::GroupId> group_for_host(const std::string& host) const;

  /// Takes the oldest usable token for the host's known group, if any.
  std::optional<Bytes> take_token_for_host(const std::string& host, std::int64_t now_ms);

  /// Association rules applied when a connection establishes: the new token
  /// (if any) is banked under the connection's group, every hostname the
  /// group covers is pointed at it, and the anchor certificate plus a
  /// resumption ticket for the target host are remembered.
  void record_established(const std::string& host, const groups::Certificate& anchor_cert,
                          int group_bit, const std::optional<Bytes>& new_token,
                          std::int64_t now_ms);

  std::optional<groups::Certificate> ticket_cert_for(const std::string& host) const;
  bool has_ticket(const std::string& host) const { return tickets_.contains(host); }

  /// Test/scenario hooks.
  void seed_group(const std::string& host, const groups::GroupId& group);
  void seed_ticket(const std::string& host, const groups::Certificate& cert);

 private:
  TokenCache tokens_;
  std::unordered_map<std::string, groups::GroupId> host_groups_;
  std::unordered_map<groups::CertId, groups::Certificate> certs_;
  std::unordered_map<std::string, groups::CertId> tickets_;  // host -> original cert
};

}  // namespace quicshare::cache
