#include "quicshare/token_cache.hpp"

#include <algorithm>
#include <sstream>
#include <vector>

namespace quicshare::cache {

void TokenCache::store(const groups::GroupId& group, Bytes token, std::int64_t now_ms,
                       std::string source_host) {
  entries_[group].push_back(CacheEntry{group, std::move(token), now_ms, std::move(source_host)});
}

std::optional<Bytes> TokenCache::take(const groups::GroupId& group, std::int64_t now_ms) {
  auto it = entries_.find(group);
  if (it == entries_.end()) return std::nullopt;
  auto& queue = it->second;
  while (!queue.empty()) {
    if (expired(queue.front(), now_ms)) {
      queue.pop_front();
      continue;
    }
    Bytes token = std::move(queue.front().token);
    queue.pop_front();
    if (queue.empty()) entries_.erase(it);
    return token;
  }
  entries_.erase(it);
  return std::nullopt;
}

void TokenCache::evict_expired(std::int64_t now_ms) {
  for (auto it = entries_.begin(); it != entries_.end();) {
    auto& queue = it->second;
    std::erase_if(queue, [&](const CacheEntry& e) { return expired(e, now_ms); });
    it = queue.empty() ? entries_.erase(it) : std::next(it);
  }
}

std::size_t TokenCache::size() const {
  std::size_t n = 0;
  for (const auto& [_, queue] : entries_) n += queue.size();
  return n;
}

std::size_t TokenCache::count(const groups::GroupId& group) const {
  auto it = entries_.find(group);
  return it == entries_.end() ? 0 : it->second.size();
}

std::string TokenCache::snapshot_json(std::int64_t now_ms) const {
  std::vector<std::pair<std::string, std::size_t>> rows;
  for (const auto& [group, queue] : entries_) {
    std::size_t live = 0;
    for (const auto& e : queue) {
      if (!expired(e, now_ms)) ++live;
    }
    if (live != 0) rows.emplace_back(group.hex(), live);
  }
  std::sort(rows.begin(), rows.end());
  std::ostringstream out;
  out << "{";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i != 0) out << ",";
    out << "\"" << rows[i].first << "\":" << rows[i].second;
  }
  out << "}";
  return out.str();
}

groups::GroupId group_for_connection(const groups::Certificate& anchor_cert, int group_bit,
                                     const std::string& fallback_host) {
  if (group_bit == 1) return groups::group_of_certificate(anchor_cert);
  return groups::group_of_hostname(fallback_host);
}

std::optional<groups::GroupId> ClientStore::group_for_host(const std::string& host) const {
  auto it = host_groups_.find(host);
  if (it == host_groups_.end()) return std::nullopt;
  return it->second;
}

std::optional<Bytes> ClientStore::take_token_for_host(const std::string& host,
                                                      std::int64_t now_ms) {
  auto group = group_for_host(host);
  if (!group) return std::nullopt;
  return tokens_.take(*group, now_ms);
}

void ClientStore::record_established(const std::string& host,
                                     const groups::Certificate& anchor_cert, int group_bit,
                                     const std::optional<Bytes>& new_token, std::int64_t now_ms) {
  const groups::GroupId group = group_for_connection(anchor_cert, group_bit, host);
  if (group_bit == 1) {
    for (const auto& san : anchor_cert.san_hostnames) host_groups_[san] = group;
    host_groups_[host] = group;  // SNI host may fall outside the SAN list
  } else {
    host_groups_[host] = group;
  }
  if (new_token) tokens_.store(group, *new_token, now_ms, host);
  certs_[anchor_cert.cert_id] = anchor_cert;
  tickets_[host] = anchor_cert.cert_id;
}

std::optional<groups::Certificate> ClientStore::ticket_cert_for(const std::string& host) const {
  auto it = tickets_.find(host);
  if (it == tickets_.end()) return std::nullopt;
  auto cit = certs_.find(it->second);
  if (cit == certs_.end()) return std::nullopt;
  return cit->second;
}

void ClientStore::seed_group(const std::string& host, const groups::GroupId& group) {
  host_groups_[host] = group;
}

void ClientStore::seed_ticket(const std::string& host, const groups::Certificate& cert) {
  certs_[cert.cert_id] = cert;
  tickets_[host] = cert.cert_id;
}

}  // namespace quicshare::cache
