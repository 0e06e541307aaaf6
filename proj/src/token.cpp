#include "quicshare/token.hpp"

#include <algorithm>

#include "quicshare/digest.hpp"

namespace quicshare::token {

std::string_view reject_reason_name(RejectReason reason) {
  switch (reason) {
    case RejectReason::BadLength: return "BadLength";
    case RejectReason::BadVersion: return "BadVersion";
    case RejectReason::BadTag: return "BadTag";
    case RejectReason::IpMismatch: return "IpMismatch";
    case RejectReason::Expired: return "Expired";
    case RejectReason::Replayed: return "Replayed";
  }
  return "Unknown";
}

void RandomSource::fill(std::span<std::uint8_t> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    std::uint64_t word = engine_();
    for (int b = 0; b < 8 && i < out.size(); ++b, ++i) {
      out[i] = static_cast<std::uint8_t>(word >> (8 * b));
    }
  }
}

Nonce RandomSource::next_nonce() {
  Nonce n{};
  fill(n);
  return n;
}

std::size_t ReplayStore::NonceHash::operator()(const Nonce& n) const noexcept {
  std::size_t h = 1469598103934665603ull;
  for (auto b : n) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

bool ReplayStore::check_and_record(const groups::GroupId& group, const Nonce& nonce) {
  return seen_[group].insert(nonce).second;
}

bool ReplayStore::seen(const groups::GroupId& group, const Nonce& nonce) const {
  auto it = seen_.find(group);
  return it != seen_.end() && it->second.contains(nonce);
}

std::size_t ReplayStore::size() const {
  std::size_t total = 0;
  for (const auto& [_, nonces] : seen_) total += nonces.size();
  return total;
}

namespace {

Bytes encode_prefix(const TokenFields& f) {
  Bytes out;
  out.reserve(kAuthenticatedPrefixSize);
  out.push_back(f.version);
  out.insert(out.end(), f.group_id.bytes.begin(), f.group_id.bytes.end());
  out.insert(out.end(), f.client_ip.bytes.begin(), f.client_ip.bytes.end());
  put_u64_be(out, static_cast<std::uint64_t>(f.issued_at_ms));
  out.insert(out.end(), f.nonce.begin(), f.nonce.end());
  return out;
}

}  // namespace

Bytes make_token(const GroupSecret& secret, const TokenFields& fields) {
  Bytes out = encode_prefix(fields);
  const Digest32 tag = hmac_sha256(secret.key, out);
  out.insert(out.end(), tag.begin(), tag.end());
  return out;
}

Bytes issue_token(const GroupSecret& secret, const groups::GroupId& group, const IpAddress& client_ip,
                  std::int64_t now_ms, RandomSource& rng) {
  TokenFields f;
  f.group_id = group;
  f.client_ip = client_ip;
  f.issued_at_ms = now_ms;
  f.nonce = rng.next_nonce();
  return make_token(secret, f);
}

std::optional<TokenFields> decode_token(std::span<const std::uint8_t> token_bytes,
                                        DecodeError* error) {
  if (token_bytes.size() != kTokenSize) {
    if (error) *error = DecodeError::BadLength;
    return std::nullopt;
  }
  if (token_bytes[0] != kTokenVersion) {
    if (error) *error = DecodeError::BadVersion;
    return std::nullopt;
  }
  TokenFields f;
  f.version = token_bytes[0];
  std::size_t off = 1;
  std::copy_n(token_bytes.begin() + off, kGroupIdSize, f.group_id.bytes.begin());
  off += kGroupIdSize;
  std::copy_n(token_bytes.begin() + off, 16, f.client_ip.bytes.begin());
  off += 16;
  f.issued_at_ms = static_cast<std::int64_t>(read_u64_be(token_bytes, off));
  off += 8;
  std::copy_n(token_bytes.begin() + off, kNonceSize, f.nonce.begin());
  return f;
}

ValidationResult validate_token(const GroupSecret& secret, std::span<const std::uint8_t> token_bytes,
                                const IpAddress& claimed_ip, std::int64_t now_ms,
                                std::int64_t max_age_ms, ReplayStore& replay) {
  if (token_bytes.size() != kTokenSize) {
    return ValidationResult::reject(RejectReason::BadLength);
  }
  if (token_bytes[0] != kTokenVersion) {
    return ValidationResult::reject(RejectReason::BadVersion);
  }
  const auto prefix = token_bytes.first(kAuthenticatedPrefixSize);
  const Digest32 expected = hmac_sha256(secret.key, prefix);
  if (!std::equal(expected.begin(), expected.end(), token_bytes.begin() + kAuthenticatedPrefixSize)) {
    return ValidationResult::reject(RejectReason::BadTag);
  }

  TokenFields f = *decode_token(token_bytes);
  if (f.client_ip != claimed_ip) {
    return ValidationResult::reject(RejectReason::IpMismatch, f);
  }
  if (now_ms - f.issued_at_ms > max_age_ms) {
    return ValidationResult::reject(RejectReason::Expired, f);
  }
  if (!replay.check_and_record(f.group_id, f.nonce)) {
    return ValidationResult::reject(RejectReason::Replayed, f);
  }
  return ValidationResult::accept(std::move(f));
}

}  // namespace quicshare::token
