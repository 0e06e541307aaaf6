#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "quicshare/groups.hpp"

namespace quicshare::pageload {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : DatasetError {
  using DatasetError::DatasetError;
};
struct SchemaVersionError : DatasetError {
  using DatasetError::DatasetError;
};
struct TreeInvariantViolation : DatasetError {
  using DatasetError::DatasetError;
};
struct UncoveredHostname : DatasetError {
  using DatasetError::DatasetError;
};
struct EmptyDataset : DatasetError {
  using DatasetError::DatasetError;
};

struct SiteNode {
  std::string hostname;
  groups::CertId cert_id;
  std::vector<std::string> resumption_partners;  // within the same tree
};

/// Hostnames contacted while loading one website, with trigger edges forming
/// a tree rooted at `site`.
struct DomainTree {
  std::string site;
  std::vector<SiteNode> nodes;
  std::vector<std::pair<std::string, std::string>> edges;  // parent -> child

  std::size_t node_count() const { return nodes.size(); }
};

/// Checks the tree shape: the site is a node, every other node has exactly
/// one parent, everything is reachable from the root, hostnames are unique,
/// and resumption partners stay inside the tree.
void validate_tree(const DomainTree& tree);

/// Max number of nodes on any root-to-leaf path.
int tree_depth(const DomainTree& tree);

inline constexpr int kDatasetSchemaVersion = 1;

/// Loads `{"version":1,"trees":[...]}`. With `lenient` set, trees violating
/// invariants are skipped (their site names appended to `skipped`) instead
/// of aborting the load.
std::vector<DomainTree> load_dataset(const std::string& path, bool lenient = false,
                                     std::vector<std::string>* skipped = nullptr);
std::vector<DomainTree> parse_dataset(const std::string& text, bool lenient = false,
                                      std::vector<std::string>* skipped = nullptr);
std::string dataset_to_json(const std::vector<DomainTree>& trees);

/// Wide trust relation over one tree: shared certificate or cross-host
/// resumption, transitively closed.
groups::TrustPartition partition_for_tree(const DomainTree& tree);

enum class VisitOrder : std::uint8_t {
  Total,  // preorder; each connection completes before the next begins
  Level,  // breadth-first; tokens usable only from strictly shallower levels
};

struct SimulatePolicy {
  bool shared = true;
  VisitOrder order = VisitOrder::Total;
};

struct SiteMetrics {
  std::string site;
  std::size_t connections = 0;
  std::size_t retry_handshakes = 0;
  int longest_retry_path = 0;
  double delay_overhead_ms = 0.0;  // retry-attributable RTTs on the longest path
};

/// Replays one site load. A node converts (token spent, one RTT saved) when
/// the cache holds a token for its group at visit time; otherwise it is a
/// retry handshake. Every completed connection banks one fresh token for its
/// group. With sharing off every node is a retry.
SiteMetrics simulate_site(const DomainTree& tree, const groups::TrustPartition& partition,
                          const SimulatePolicy& policy, double rtt_ms);

struct PolicySummary {
  double mean_retries = 0.0;
  double mean_longest_path = 0.0;
  std::map<std::size_t, double> histogram_retries;  // retry count -> share of sites
  std::map<int, double> histogram_path;             // longest path -> share of sites
};

struct AggregateMetrics {
  std::size_t sites = 0;
  VisitOrder order = VisitOrder::Total;
  double rtt_ms = 0.0;
  PolicySummary baseline;
  PolicySummary shared;
  double savings_retries_abs = 0.0;
  double savings_retries_rel = 0.0;  // fraction of baseline
  double savings_path_abs = 0.0;
  double savings_path_rel = 0.0;
  double delay_saving_ms = 0.0;  // savings_path_abs * rtt_ms
};

/// Runs every tree under both the per-hostname baseline and the shared
/// policy and aggregates means, histograms, and savings.
AggregateMetrics evaluate_dataset(const std::vector<DomainTree>& trees, VisitOrder order,
                                  double rtt_ms);

struct SynthParams {
  std::uint64_t seed = 1;
  std::size_t site_count = 10;
  int depth_min = 2;
  int depth_max = 5;
  int fanout_min = 1;
  int fanout_max = 3;
  double group_density = 0.5;  // probability a node joins an earlier node's group
};

/// Deterministic synthetic dataset generator. Throws std::invalid_argument
/// on empty ranges or a density outside [0, 1].
std::vector<DomainTree> gen_synthetic(const SynthParams& params);

enum class ReportSections : std::uint8_t { BaselineOnly, SharedOnly, Both };

std::string emit_report_json(const AggregateMetrics& metrics, ReportSections sections);
std::string emit_report_csv(const AggregateMetrics& metrics, ReportSections sections);

}  // namespace quicshare::pageload
