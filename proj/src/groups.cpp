#include "quicshare/groups.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "quicshare/bytes.hpp"
#include "quicshare/digest.hpp"

namespace quicshare::groups {

namespace {

constexpr std::string_view kGroupIdLabel = "validation-group-v1";

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

/// Union-find over dense indices, path halving + union by size.
class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void merge(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

}  // namespace

std::string GroupId::hex() const { return to_hex(bytes); }

std::size_t GroupIdHash::operator()(const GroupId& id) const noexcept {
  std::size_t h = 1469598103934665603ull;
  for (auto b : id.bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

Certificate Certificate::make(CertId id, std::vector<std::string> sans) {
  for (auto& s : sans) s = lowercase(std::move(s));
  std::sort(sans.begin(), sans.end());
  sans.erase(std::unique(sans.begin(), sans.end()), sans.end());
  return Certificate{std::move(id), std::move(sans)};
}

GroupId group_id_from_hostnames(std::vector<std::string> hostnames) {
  for (auto& h : hostnames) h = lowercase(std::move(h));
  std::sort(hostnames.begin(), hostnames.end());
  hostnames.erase(std::unique(hostnames.begin(), hostnames.end()), hostnames.end());

  Bytes canonical(kGroupIdLabel.begin(), kGroupIdLabel.end());
  canonical.push_back(0);
  for (std::size_t i = 0; i < hostnames.size(); ++i) {
    if (i != 0) canonical.push_back('\n');
    canonical.insert(canonical.end(), hostnames[i].begin(), hostnames[i].end());
  }
  const Digest32 full = sha256(canonical);
  GroupId id{};
  std::copy_n(full.begin(), id.bytes.size(), id.bytes.begin());
  return id;
}

GroupId group_of_hostname(const std::string& hostname) {
  return group_id_from_hostnames({hostname});
}

GroupId group_of_certificate(const Certificate& cert) {
  if (cert.san_hostnames.empty()) {
    throw std::invalid_argument("certificate has no SAN hostnames: " + cert.cert_id);
  }
  return group_id_from_hostnames(cert.san_hostnames);
}

bool accepts(const std::vector<std::string>& group_sans, const std::string& host) {
  const std::string needle = lowercase(host);
  return std::find(group_sans.begin(), group_sans.end(), needle) != group_sans.end();
}

TrustPartition build_trust_partition(
    const std::vector<std::string>& hosts,
    const std::unordered_map<std::string, Certificate>& cert_map,
    const std::vector<std::pair<std::string, std::string>>& resumption_edges) {
  std::vector<std::string> names;
  names.reserve(hosts.size());
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& h : hosts) {
    std::string name = lowercase(h);
    if (index.emplace(name, names.size()).second) names.push_back(std::move(name));
  }

  DisjointSet dsu(names.size());

  // Shared certificate: all hostnames presenting the same cert_id join.
  std::unordered_map<CertId, std::size_t> first_with_cert;
  for (const auto& [host, cert] : cert_map) {
    auto it = index.find(lowercase(host));
    if (it == index.end()) continue;  // cert for a host outside this set
    auto [cit, inserted] = first_with_cert.emplace(cert.cert_id, it->second);
    if (!inserted) dsu.merge(cit->second, it->second);
  }

  for (const auto& [a, b] : resumption_edges) {
    auto ia = index.find(lowercase(a));
    auto ib = index.find(lowercase(b));
    if (ia == index.end() || ib == index.end()) {
      throw std::invalid_argument("resumption edge references unknown hostname: " +
                                  (ia == index.end() ? a : b));
    }
    dsu.merge(ia->second, ib->second);
  }

  std::unordered_map<std::size_t, std::vector<std::string>> components;
  for (std::size_t i = 0; i < names.size(); ++i) {
    components[dsu.find(i)].push_back(names[i]);
  }

  TrustPartition partition;
  for (auto& [root, member_list] : components) {
    std::sort(member_list.begin(), member_list.end());
    const GroupId id = group_id_from_hostnames(member_list);
    for (const auto& m : member_list) partition.group_of.emplace(m, id);
    partition.members.emplace(id, std::move(member_list));
  }
  return partition;
}

std::string TrustPartition::to_json() const {
  std::vector<std::string> keys;
  keys.reserve(group_of.size());
  for (const auto& [host, _] : group_of) keys.push_back(host);
  std::sort(keys.begin(), keys.end());

  std::ostringstream out;
  out << "{";
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i != 0) out << ",";
    out << "\"" << keys[i] << "\":\"" << group_of.at(keys[i]).hex() << "\"";
  }
  out << "}";
  return out.str();
}

}  // namespace quicshare::groups
