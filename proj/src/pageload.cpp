#include "quicshare/pageload.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace quicshare::pageload {

namespace {

using json = nlohmann::ordered_json;

struct TreeIndex {
  std::unordered_map<std::string, std::size_t> by_host;
  std::vector<std::vector<std::size_t>> children;  // edge insertion order
  std::size_t root = 0;
};

TreeIndex index_tree(const DomainTree& tree) {
  TreeIndex idx;
  idx.children.resize(tree.nodes.size());
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    idx.by_host.emplace(tree.nodes[i].hostname, i);
  }
  idx.root = idx.by_host.at(tree.site);
  for (const auto& [parent, child] : tree.edges) {
    idx.children[idx.by_host.at(parent)].push_back(idx.by_host.at(child));
  }
  return idx;
}

void fail_tree(const std::string& site, const std::string& what) {
  throw TreeInvariantViolation("tree '" + site + "': " + what);
}

}  // namespace

void validate_tree(const DomainTree& tree) {
  if (tree.site.empty()) throw TreeInvariantViolation("tree with empty site name");
  if (tree.nodes.empty()) fail_tree(tree.site, "no nodes");

  std::unordered_map<std::string, std::size_t> by_host;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& node = tree.nodes[i];
    if (node.hostname.empty()) fail_tree(tree.site, "node with empty hostname");
    if (!by_host.emplace(node.hostname, i).second) {
      fail_tree(tree.site, "duplicate hostname " + node.hostname);
    }
  }
  if (!by_host.contains(tree.site)) fail_tree(tree.site, "root hostname is not a node");

  std::vector<int> parent_count(tree.nodes.size(), 0);
  std::vector<std::vector<std::size_t>> children(tree.nodes.size());
  for (const auto& [parent, child] : tree.edges) {
    auto pit = by_host.find(parent);
    auto cit = by_host.find(child);
    if (pit == by_host.end() || cit == by_host.end()) {
      fail_tree(tree.site, "edge references unknown hostname");
    }
    if (parent == child) fail_tree(tree.site, "self edge at " + parent);
    parent_count[cit->second] += 1;
    children[pit->second].push_back(cit->second);
  }
  const std::size_t root = by_host.at(tree.site);
  if (parent_count[root] != 0) fail_tree(tree.site, "root has a parent (cycle through root)");
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    if (i != root && parent_count[i] > 1) {
      fail_tree(tree.site, "node " + tree.nodes[i].hostname + " has multiple parents");
    }
  }

  // Reachability from the root; single-parent plus full reach rules out cycles.
  std::vector<bool> seen(tree.nodes.size(), false);
  std::vector<std::size_t> stack{root};
  seen[root] = true;
  std::size_t reached = 0;
  while (!stack.empty()) {
    const std::size_t at = stack.back();
    stack.pop_back();
    ++reached;
    for (std::size_t child : children[at]) {
      if (!seen[child]) {
        seen[child] = true;
        stack.push_back(child);
      }
    }
  }
  if (reached != tree.nodes.size()) {
    fail_tree(tree.site, "unreachable nodes (disconnected or cyclic edges)");
  }

  for (const auto& node : tree.nodes) {
    for (const auto& partner : node.resumption_partners) {
      if (!by_host.contains(partner)) {
        fail_tree(tree.site, "resumption partner " + partner + " not in tree");
      }
    }
  }
}

int tree_depth(const DomainTree& tree) {
  const TreeIndex idx = index_tree(tree);
  int deepest = 0;
  std::vector<std::pair<std::size_t, int>> stack{{idx.root, 1}};
  while (!stack.empty()) {
    auto [at, depth] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, depth);
    for (std::size_t child : idx.children[at]) stack.emplace_back(child, depth + 1);
  }
  return deepest;
}

std::vector<DomainTree> parse_dataset(const std::string& text, bool lenient,
                                      std::vector<std::string>* skipped) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset parse error: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version")) {
    throw ParseError("dataset must be an object with a version field");
  }
  if (doc.at("version").get<int>() != kDatasetSchemaVersion) {
    throw SchemaVersionError("unsupported dataset version " + doc.at("version").dump());
  }

  std::vector<DomainTree> trees;
  try {
    for (const auto& jt : doc.value("trees", json::array())) {
      DomainTree tree;
      tree.site = jt.at("site").get<std::string>();
      for (const auto& jn : jt.at("nodes")) {
        SiteNode node;
        node.hostname = jn.at("host").get<std::string>();
        node.cert_id = jn.value("cert", "");
        for (const auto& r : jn.value("resume_with", json::array())) {
          node.resumption_partners.push_back(r.get<std::string>());
        }
        tree.nodes.push_back(std::move(node));
      }
      for (const auto& je : jt.value("edges", json::array())) {
        if (!je.is_array() || je.size() != 2) {
          throw ParseError("tree '" + tree.site + "': edge must be a [parent, child] pair");
        }
        tree.edges.emplace_back(je[0].get<std::string>(), je[1].get<std::string>());
      }
      try {
        validate_tree(tree);
      } catch (const TreeInvariantViolation&) {
        if (lenient) {
          if (skipped) skipped->push_back(tree.site);
          continue;
        }
        throw;
      }
      trees.push_back(std::move(tree));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset schema error: ") + e.what());
  }
  return trees;
}

std::vector<DomainTree> load_dataset(const std::string& path, bool lenient,
                                     std::vector<std::string>* skipped) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), lenient, skipped);
}

std::string dataset_to_json(const std::vector<DomainTree>& trees) {
  json doc;
  doc["version"] = kDatasetSchemaVersion;
  doc["trees"] = json::array();
  for (const auto& tree : trees) {
    json jt;
    jt["site"] = tree.site;
    jt["nodes"] = json::array();
    for (const auto& node : tree.nodes) {
      json jn;
      jn["host"] = node.hostname;
      jn["cert"] = node.cert_id;
      if (!node.resumption_partners.empty()) jn["resume_with"] = node.resumption_partners;
      jt["nodes"].push_back(std::move(jn));
    }
    jt["edges"] = json::array();
    for (const auto& [parent, child] : tree.edges) {
      jt["edges"].push_back(json::array({parent, child}));
    }
    doc["trees"].push_back(std::move(jt));
  }
  return doc.dump(2);
}

groups::TrustPartition partition_for_tree(const DomainTree& tree) {
  std::vector<std::string> hosts;
  std::unordered_map<std::string, groups::Certificate> cert_map;
  std::vector<std::pair<std::string, std::string>> edges;
  hosts.reserve(tree.nodes.size());
  for (const auto& node : tree.nodes) {
    hosts.push_back(node.hostname);
    if (!node.cert_id.empty()) {
      cert_map.emplace(node.hostname,
                       groups::Certificate::make(node.cert_id, {node.hostname}));
    }
    for (const auto& partner : node.resumption_partners) {
      edges.emplace_back(node.hostname, partner);
    }
  }
  return groups::build_trust_partition(hosts, cert_map, edges);
}

SiteMetrics simulate_site(const DomainTree& tree, const groups::TrustPartition& partition,
                          const SimulatePolicy& policy, double rtt_ms) {
  const TreeIndex idx = index_tree(tree);
  std::vector<groups::GroupId> group_of(tree.nodes.size());
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    auto it = partition.group_of.find(tree.nodes[i].hostname);
    if (it == partition.group_of.end()) {
      throw UncoveredHostname("partition does not cover " + tree.nodes[i].hostname);
    }
    group_of[i] = it->second;
  }

  std::vector<bool> retry(tree.nodes.size(), true);
  if (policy.shared) {
    std::unordered_map<groups::GroupId, int, groups::GroupIdHash> bank;
    if (policy.order == VisitOrder::Total) {
      // Preorder; each connection deposits its token before the next starts.
      std::vector<std::size_t> stack{idx.root};
      while (!stack.empty()) {
        const std::size_t at = stack.back();
        stack.pop_back();
        auto& tokens = bank[group_of[at]];
        if (tokens > 0) {
          --tokens;
          retry[at] = false;
        }
        ++tokens;  // fresh token from the completed connection
        const auto& kids = idx.children[at];
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
      }
    } else {
      // Breadth-first; a level sees only tokens deposited by shallower levels.
      std::vector<std::size_t> level{idx.root};
      while (!level.empty()) {
        std::vector<std::pair<groups::GroupId, int>> deposits;
        std::vector<std::size_t> next;
        for (const std::size_t at : level) {
          auto it = bank.find(group_of[at]);
          if (it != bank.end() && it->second > 0) {
            --it->second;
            retry[at] = false;
          }
          deposits.emplace_back(group_of[at], 1);
          for (std::size_t child : idx.children[at]) next.push_back(child);
        }
        for (const auto& [group, n] : deposits) bank[group] += n;
        level = std::move(next);
      }
    }
  }

  SiteMetrics metrics;
  metrics.site = tree.site;
  metrics.connections = tree.nodes.size();
  metrics.retry_handshakes =
      static_cast<std::size_t>(std::count(retry.begin(), retry.end(), true));

  // Longest root-to-leaf path counted in retry handshakes, recomputed after
  // marking.
  int longest = 0;
  std::vector<std::pair<std::size_t, int>> stack{{idx.root, retry[idx.root] ? 1 : 0}};
  while (!stack.empty()) {
    auto [at, count] = stack.back();
    stack.pop_back();
    longest = std::max(longest, count);
    for (std::size_t child : idx.children[at]) {
      stack.emplace_back(child, count + (retry[child] ? 1 : 0));
    }
  }
  metrics.longest_retry_path = longest;
  metrics.delay_overhead_ms = static_cast<double>(longest) * rtt_ms;
  return metrics;
}

namespace {

PolicySummary summarize(const std::vector<SiteMetrics>& sites) {
  PolicySummary summary;
  if (sites.empty()) return summary;
  double retry_sum = 0.0;
  double path_sum = 0.0;
  std::map<std::size_t, std::size_t> retry_counts;
  std::map<int, std::size_t> path_counts;
  for (const auto& m : sites) {
    retry_sum += static_cast<double>(m.retry_handshakes);
    path_sum += static_cast<double>(m.longest_retry_path);
    retry_counts[m.retry_handshakes] += 1;
    path_counts[m.longest_retry_path] += 1;
  }
  const double n = static_cast<double>(sites.size());
  summary.mean_retries = retry_sum / n;
  summary.mean_longest_path = path_sum / n;
  for (const auto& [count, sites_with] : retry_counts) {
    summary.histogram_retries[count] = static_cast<double>(sites_with) / n;
  }
  for (const auto& [count, sites_with] : path_counts) {
    summary.histogram_path[count] = static_cast<double>(sites_with) / n;
  }
  return summary;
}

}  // namespace

AggregateMetrics evaluate_dataset(const std::vector<DomainTree>& trees, VisitOrder order,
                                  double rtt_ms) {
  if (trees.empty()) throw EmptyDataset("dataset contains no trees");

  std::vector<SiteMetrics> baseline;
  std::vector<SiteMetrics> shared;
  baseline.reserve(trees.size());
  shared.reserve(trees.size());
  for (const auto& tree : trees) {
    const groups::TrustPartition partition = partition_for_tree(tree);
    baseline.push_back(simulate_site(tree, partition, {false, order}, rtt_ms));
    shared.push_back(simulate_site(tree, partition, {true, order}, rtt_ms));
  }

  AggregateMetrics out;
  out.sites = trees.size();
  out.order = order;
  out.rtt_ms = rtt_ms;
  out.baseline = summarize(baseline);
  out.shared = summarize(shared);
  out.savings_retries_abs = out.baseline.mean_retries - out.shared.mean_retries;
  out.savings_retries_rel =
      out.baseline.mean_retries == 0.0 ? 0.0 : out.savings_retries_abs / out.baseline.mean_retries;
  out.savings_path_abs = out.baseline.mean_longest_path - out.shared.mean_longest_path;
  out.savings_path_rel = out.baseline.mean_longest_path == 0.0
                             ? 0.0
                             : out.savings_path_abs / out.baseline.mean_longest_path;
  out.delay_saving_ms = out.savings_path_abs * rtt_ms;
  return out;
}

std::vector<DomainTree> gen_synthetic(const SynthParams& params) {
  if (params.site_count == 0) throw std::invalid_argument("site_count must be positive");
  if (params.depth_min < 1 || params.depth_max < params.depth_min) {
    throw std::invalid_argument("bad depth range");
  }
  if (params.fanout_min < 0 || params.fanout_max < params.fanout_min) {
    throw std::invalid_argument("bad fanout range");
  }
  if (params.depth_max > 1 && params.fanout_max < 1) {
    throw std::invalid_argument("fanout_max must be >= 1 to reach depth > 1");
  }
  if (params.group_density < 0.0 || params.group_density > 1.0) {
    throw std::invalid_argument("group_density must be within [0, 1]");
  }

  constexpr std::size_t kMaxNodesPerTree = 4096;
  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<int> depth_dist(params.depth_min, params.depth_max);
  std::uniform_int_distribution<int> fanout_dist(params.fanout_min, params.fanout_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<DomainTree> trees;
  trees.reserve(params.site_count);
  for (std::size_t site = 0; site < params.site_count; ++site) {
    DomainTree tree;
    const std::string base = "s" + std::to_string(site) + ".example";
    tree.site = base;
    int cert_counter = 0;
    auto fresh_cert = [&] { return base + "-c" + std::to_string(cert_counter++); };

    tree.nodes.push_back(SiteNode{base, fresh_cert(), {}});
    const int target_depth = depth_dist(rng);
    std::vector<std::size_t> frontier{0};
    int node_counter = 0;
    for (int depth = 1; depth < target_depth; ++depth) {
      std::vector<std::size_t> next;
      for (std::size_t fi = 0; fi < frontier.size(); ++fi) {
        int fanout = fanout_dist(rng);
        if (fi == 0 && fanout < 1) fanout = 1;  // keep one spine at target depth
        for (int c = 0; c < fanout && tree.nodes.size() < kMaxNodesPerTree; ++c) {
          const std::string host = "n" + std::to_string(node_counter++) + "." + base;
          std::string cert;
          if (!tree.nodes.empty() && unit(rng) < params.group_density) {
            const auto pick = std::uniform_int_distribution<std::size_t>(
                0, tree.nodes.size() - 1)(rng);
            cert = tree.nodes[pick].cert_id;
          } else {
            cert = fresh_cert();
          }
          const std::size_t id = tree.nodes.size();
          tree.nodes.push_back(SiteNode{host, std::move(cert), {}});
          tree.edges.emplace_back(tree.nodes[frontier[fi]].hostname, host);
          if (unit(rng) < params.group_density * 0.25) {
            const auto pick = std::uniform_int_distribution<std::size_t>(0, id - 1)(rng);
            tree.nodes[id].resumption_partners.push_back(tree.nodes[pick].hostname);
            tree.nodes[pick].resumption_partners.push_back(host);
          }
          next.push_back(id);
        }
      }
      if (next.empty()) break;
      frontier = std::move(next);
    }
    validate_tree(tree);
    trees.push_back(std::move(tree));
  }
  return trees;
}

namespace {

json summary_to_json(const PolicySummary& summary) {
  json out;
  out["mean_retries"] = summary.mean_retries;
  out["mean_longest_path"] = summary.mean_longest_path;
  json hr;
  for (const auto& [count, share] : summary.histogram_retries) {
    hr[std::to_string(count)] = share;
  }
  out["histogram_retries"] = std::move(hr);
  json hp;
  for (const auto& [count, share] : summary.histogram_path) {
    hp[std::to_string(count)] = share;
  }
  out["histogram_path"] = std::move(hp);
  return out;
}

std::string order_name(VisitOrder order) {
  return order == VisitOrder::Total ? "total" : "level";
}

std::string format_share(double share) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9f", share);
  return buf;
}

void append_csv_rows(std::string& out, const std::string& mode, const PolicySummary& summary) {
  for (const auto& [count, share] : summary.histogram_retries) {
    out += "retries," + mode + "," + std::to_string(count) + "," + format_share(share) + "\n";
  }
  for (const auto& [count, share] : summary.histogram_path) {
    out += "path," + mode + "," + std::to_string(count) + "," + format_share(share) + "\n";
  }
}

}  // namespace

std::string emit_report_json(const AggregateMetrics& metrics, ReportSections sections) {
  json out;
  out["schema"] = "pageload-report-v1";
  out["order"] = order_name(metrics.order);
  out["rtt_ms"] = metrics.rtt_ms;
  out["sites"] = metrics.sites;
  if (sections != ReportSections::SharedOnly) out["baseline"] = summary_to_json(metrics.baseline);
  if (sections != ReportSections::BaselineOnly) out["shared"] = summary_to_json(metrics.shared);
  if (sections == ReportSections::Both) {
    json savings;
    savings["retries_abs"] = metrics.savings_retries_abs;
    savings["retries_rel"] = metrics.savings_retries_rel;
    savings["path_abs"] = metrics.savings_path_abs;
    savings["path_rel"] = metrics.savings_path_rel;
    savings["delay_ms"] = metrics.delay_saving_ms;
    out["savings"] = std::move(savings);
  }
  return out.dump(2);
}

std::string emit_report_csv(const AggregateMetrics& metrics, ReportSections sections) {
  std::string out = "histogram,mode,count,share\n";
  if (sections != ReportSections::SharedOnly) append_csv_rows(out, "baseline", metrics.baseline);
  if (sections != ReportSections::BaselineOnly) append_csv_rows(out, "shared", metrics.shared);
  return out;
}

}  // namespace quicshare::pageload
