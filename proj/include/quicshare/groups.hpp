#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace quicshare::groups {

using CertId = std::string;

/// Identity of a validation group: 16-byte digest of the canonical
/// (sorted, lowercase) hostname list it covers.
struct GroupId {
  std::array<std::uint8_t, 16> bytes{};

  std::string hex() const;
  auto operator<=>(const GroupId&) const = default;
};

struct GroupIdHash {
  std::size_t operator()(const GroupId& id) const noexcept;
};

/// Simulated certificate: opaque identity plus the SAN hostname list.
/// Hostnames are normalized to lowercase and deduplicated on construction.
struct Certificate {
  CertId cert_id;
  std::vector<std::string> san_hostnames;  // sorted, lowercase, unique

  static Certificate make(CertId id, std::vector<std::string> sans);
};

/// Group identity for a hostname set. Order of the input is irrelevant.
GroupId group_id_from_hostnames(std::vector<std::string> hostnames);

/// Degenerate single-hostname group, used when cross-host validation is off.
GroupId group_of_hostname(const std::string& hostname);

/// Protocol-mode group of a certificate: digest of its sorted SAN list.
/// Certificates with identical coverage map to the same group.
/// Throws std::invalid_argument on an empty SAN list.
GroupId group_of_certificate(const Certificate& cert);

/// True iff `host` is covered by the SAN set. Exact match; wildcard names
/// are compared literally, not expanded.
bool accepts(const std::vector<std::string>& group_sans, const std::string& host);

/// Dataset-mode partition of hostnames into validation groups.
struct TrustPartition {
  std::unordered_map<std::string, GroupId> group_of;
  std::unordered_map<GroupId, std::vector<std::string>, GroupIdHash> members;

  std::size_t group_count() const { return members.size(); }
  std::string to_json() const;  // {"hostname": "group_id_hex", ...}, sorted keys
};

/// Builds the trust partition over `hosts`: hostnames sharing a cert_id are
/// merged, each resumption edge merges its endpoints, and the result is the
/// transitive closure. Group ids are digests of the sorted member lists.
/// Throws std::invalid_argument if an edge endpoint is not in `hosts`.
TrustPartition build_trust_partition(
    const std::vector<std::string>& hosts,
    const std::unordered_map<std::string, Certificate>& cert_map,
    const std::vector<std::pair<std::string, std::string>>& resumption_edges);

}  // namespace quicshare::groups
