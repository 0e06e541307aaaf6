#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "quicshare/pageload.hpp"

using namespace quicshare;
using namespace quicshare::pageload;

namespace {

DomainTree chain(const std::string& site, const std::vector<std::string>& hosts,
                 const std::vector<std::string>& certs) {
  DomainTree tree;
  tree.site = site;
  for (std::size_t i = 0; i < hosts.size(); ++i) {
    tree.nodes.push_back(SiteNode{hosts[i], certs[i], {}});
    if (i > 0) tree.edges.emplace_back(hosts[i - 1], hosts[i]);
  }
  return tree;
}

/// Independent group-count oracle: breadth-first closure over the
/// shared-cert / resumption relation, no union-find, no partition reuse.
std::size_t brute_force_group_count(const DomainTree& tree) {
  std::map<std::string, std::set<std::string>> adj;
  std::map<std::string, std::vector<std::string>> by_cert;
  for (const auto& node : tree.nodes) {
    adj[node.hostname];
    if (!node.cert_id.empty()) by_cert[node.cert_id].push_back(node.hostname);
    for (const auto& partner : node.resumption_partners) {
      adj[node.hostname].insert(partner);
      adj[partner].insert(node.hostname);
    }
  }
  for (const auto& [_, members] : by_cert) {
    for (const auto& a : members) {
      for (const auto& b : members) {
        if (a != b) adj[a].insert(b);
      }
    }
  }
  std::set<std::string> visited;
  std::size_t count = 0;
  for (const auto& node : tree.nodes) {
    if (visited.contains(node.hostname)) continue;
    ++count;
    std::vector<std::string> queue{node.hostname};
    visited.insert(node.hostname);
    while (!queue.empty()) {
      const std::string at = queue.back();
      queue.pop_back();
      for (const auto& next : adj[at]) {
        if (visited.insert(next).second) queue.push_back(next);
      }
    }
  }
  return count;
}

SiteMetrics run_site(const DomainTree& tree, bool shared, VisitOrder order, double rtt = 90.0) {
  return simulate_site(tree, partition_for_tree(tree), {shared, order}, rtt);
}

}  // namespace

TEST_CASE("bundled google chain fixture loads as one tree of depth four") {
  const auto trees = load_dataset("fixtures/google_chain.json");
  REQUIRE(trees.size() == 1);
  CHECK(trees[0].site == "google.com");
  CHECK(trees[0].node_count() == 4);
  CHECK(tree_depth(trees[0]) == 4);
}

TEST_CASE("a cycle in the edges is an invariant violation") {
  const std::string text = R"({"version":1,"trees":[{
    "site":"a","nodes":[{"host":"a"},{"host":"b"},{"host":"c"}],
    "edges":[["a","b"],["b","c"],["c","b"]]}]})";
  CHECK_THROWS_AS(parse_dataset(text), TreeInvariantViolation);

  std::vector<std::string> skipped;
  const auto trees = parse_dataset(text, true, &skipped);
  CHECK(trees.empty());
  REQUIRE(skipped.size() == 1);
  CHECK(skipped[0] == "a");
}

TEST_CASE("empty input yields an empty dataset") {
  CHECK(parse_dataset("").empty());
  CHECK(parse_dataset("  \n").empty());
}

TEST_CASE("version and shape errors are distinguished") {
  CHECK_THROWS_AS(parse_dataset("{\"version\": 2, \"trees\": []}"), SchemaVersionError);
  CHECK_THROWS_AS(parse_dataset("not json at all"), ParseError);
  CHECK_THROWS_AS(parse_dataset("[1,2,3]"), ParseError);
  CHECK_THROWS_AS(parse_dataset(
                      R"({"version":1,"trees":[{"site":"a","nodes":[{"host":"a"}],"edges":[["a"]]}]})"),
                  ParseError);
}

TEST_CASE("duplicate hostnames and unknown edge endpoints are violations") {
  CHECK_THROWS_AS(parse_dataset(R"({"version":1,"trees":[{
    "site":"a","nodes":[{"host":"a"},{"host":"a"}],"edges":[]}]})"),
                  TreeInvariantViolation);
  CHECK_THROWS_AS(parse_dataset(R"({"version":1,"trees":[{
    "site":"a","nodes":[{"host":"a"}],"edges":[["a","ghost"]]}]})"),
                  TreeInvariantViolation);
  CHECK_THROWS_AS(parse_dataset(R"({"version":1,"trees":[{
    "site":"a","nodes":[{"host":"a"},{"host":"b"}],"edges":[]}]})"),
                  TreeInvariantViolation);  // b unreachable
}

TEST_CASE("distinct groups on the four-chain leave nothing to share") {
  const auto tree = chain("g.example",
                          {"g.example", "w.example", "s.example", "a.example"},
                          {"c1", "c2", "c3", "c4"});
  const auto metrics = run_site(tree, true, VisitOrder::Total);
  CHECK(metrics.connections == 4);
  CHECK(metrics.retry_handshakes == 4);
  CHECK(metrics.longest_retry_path == 4);
  CHECK(metrics.delay_overhead_ms == 4 * 90.0);
}

TEST_CASE("shared group between chain positions two and four saves one retry") {
  const auto tree = chain("g.example",
                          {"g.example", "w.example", "s.example", "a.example"},
                          {"c1", "c24", "c3", "c24"});
  const auto metrics = run_site(tree, true, VisitOrder::Total);
  CHECK(metrics.retry_handshakes == 3);
  CHECK(metrics.longest_retry_path == 3);
}

TEST_CASE("baseline marks every node as a retry") {
  const auto tree = chain("g.example", {"g.example", "w.example"}, {"shared", "shared"});
  const auto metrics = run_site(tree, false, VisitOrder::Total);
  CHECK(metrics.retry_handshakes == 2);
  CHECK(metrics.longest_retry_path == 2);
}

TEST_CASE("level order cannot use tokens deposited by same-level siblings") {
  // Root plus three same-group children: preorder converts all three,
  // breadth-first only the first.
  DomainTree tree;
  tree.site = "star";
  tree.nodes = {SiteNode{"star", "c-star", {}}, SiteNode{"x.star", "c-star", {}},
                SiteNode{"y.star", "c-star", {}}, SiteNode{"z.star", "c-star", {}}};
  tree.edges = {{"star", "x.star"}, {"star", "y.star"}, {"star", "z.star"}};

  const auto total = run_site(tree, true, VisitOrder::Total);
  CHECK(total.retry_handshakes == 1);
  CHECK(total.longest_retry_path == 1);

  const auto level = run_site(tree, true, VisitOrder::Level);
  CHECK(level.retry_handshakes == 3);
  CHECK(level.longest_retry_path == 2);
}

TEST_CASE("uncovered hostname in the partition is reported") {
  const auto tree = chain("a", {"a", "b"}, {"c1", "c2"});
  const auto partition = partition_for_tree(chain("a", {"a"}, {"c1"}));
  CHECK_THROWS_AS(simulate_site(tree, partition, {true, VisitOrder::Total}, 90.0),
                  UncoveredHostname);
}

TEST_CASE("group-count identity on random synthetic trees") {
  SynthParams params;
  params.seed = 20240;
  params.site_count = 300;
  params.depth_min = 1;
  params.depth_max = 6;
  params.fanout_min = 0;
  params.fanout_max = 3;
  params.group_density = 0.45;
  const auto trees = gen_synthetic(params);
  for (const auto& tree : trees) {
    const auto metrics = run_site(tree, true, VisitOrder::Total);
    CHECK(metrics.retry_handshakes == brute_force_group_count(tree));
  }
}

TEST_CASE("sharing never hurts and level order never beats total order") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    SynthParams params;
    params.seed = seed;
    params.site_count = 120;
    params.depth_min = 1;
    params.depth_max = 5;
    params.fanout_min = 0;
    params.fanout_max = 4;
    params.group_density = 0.6;
    for (const auto& tree : gen_synthetic(params)) {
      const auto baseline = run_site(tree, false, VisitOrder::Total);
      const auto shared_total = run_site(tree, true, VisitOrder::Total);
      const auto shared_level = run_site(tree, true, VisitOrder::Level);

      // Baseline identity: node count and depth, exactly.
      CHECK(baseline.retry_handshakes == tree.node_count());
      CHECK(baseline.longest_retry_path == tree_depth(tree));

      // Monotonicity.
      CHECK(shared_total.retry_handshakes <= baseline.retry_handshakes);
      CHECK(shared_total.longest_retry_path <= baseline.longest_retry_path);
      CHECK(shared_level.retry_handshakes <= baseline.retry_handshakes);
      CHECK(shared_level.longest_retry_path <= baseline.longest_retry_path);

      // Tokens are available no earlier under breadth-first visiting.
      CHECK(shared_level.retry_handshakes >= shared_total.retry_handshakes);
    }
  }
}

TEST_CASE("mini fixture matches the frozen oracle metrics") {
  // Expectations computed by tests/oracle/pageload_oracle.py on fixtures/mini.json.
  const auto trees = load_dataset("fixtures/mini.json");
  REQUIRE(trees.size() == 3);

  const auto metrics = evaluate_dataset(trees, VisitOrder::Total, 90.0);
  CHECK(metrics.baseline.mean_retries == doctest::Approx(11.0 / 3).epsilon(1e-12));
  CHECK(metrics.shared.mean_retries == doctest::Approx(7.0 / 3).epsilon(1e-12));
  CHECK(metrics.baseline.mean_longest_path == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(metrics.shared.mean_longest_path == doctest::Approx(7.0 / 3).epsilon(1e-12));
  CHECK(metrics.delay_saving_ms == doctest::Approx(60.0).epsilon(1e-9));

  // Per-site values, frozen from the oracle: (retries, longest path).
  const std::map<std::string, std::pair<std::size_t, int>> expected_total{
      {"chain4.example", {4, 4}}, {"star.example", {1, 1}}, {"resume.example", {2, 2}}};
  for (const auto& tree : trees) {
    const auto site = run_site(tree, true, VisitOrder::Total);
    const auto [retries, path] = expected_total.at(tree.site);
    CHECK(site.retry_handshakes == retries);
    CHECK(site.longest_retry_path == path);
  }

  const auto level = evaluate_dataset(trees, VisitOrder::Level, 90.0);
  CHECK(level.shared.mean_retries == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(level.shared.mean_longest_path == doctest::Approx(8.0 / 3).epsilon(1e-12));
}

TEST_CASE("per-site delay saving is exactly the path difference times rtt") {
  SynthParams params;
  params.seed = 31;
  params.site_count = 40;
  params.group_density = 0.7;
  for (double rtt : {45.0, 90.0, 300.0}) {
    for (const auto& tree : gen_synthetic(params)) {
      const auto baseline = run_site(tree, false, VisitOrder::Total, rtt);
      const auto shared = run_site(tree, true, VisitOrder::Total, rtt);
      const double saving = baseline.delay_overhead_ms - shared.delay_overhead_ms;
      const double expected =
          static_cast<double>(baseline.longest_retry_path - shared.longest_retry_path) * rtt;
      CHECK(saving == expected);  // exact, both sides integer multiples of rtt
    }
  }
}

TEST_CASE("singleton site costs one retry under both policies") {
  const auto tree = chain("solo", {"solo"}, {"c"});
  const auto metrics = evaluate_dataset({tree}, VisitOrder::Total, 90.0);
  CHECK(metrics.baseline.mean_retries == 1.0);
  CHECK(metrics.shared.mean_retries == 1.0);
  CHECK(metrics.delay_saving_ms == 0.0);
}

TEST_CASE("empty dataset is rejected") {
  CHECK_THROWS_AS(evaluate_dataset({}, VisitOrder::Total, 90.0), EmptyDataset);
}

TEST_CASE("savings_158 fixture reproduces the 142.2 ms delay saving at 90 ms RTT") {
  const auto trees = load_dataset("fixtures/savings_158.json");
  REQUIRE(trees.size() == 50);
  const auto metrics = evaluate_dataset(trees, VisitOrder::Total, 90.0);
  CHECK(metrics.savings_path_abs == doctest::Approx(1.58).epsilon(1e-12));
  CHECK(metrics.delay_saving_ms == doctest::Approx(142.2).epsilon(1e-9));
}

TEST_CASE("synthetic generation is deterministic and honors density extremes") {
  SynthParams params;
  params.seed = 1;
  params.site_count = 10;
  const auto a = gen_synthetic(params);
  const auto b = gen_synthetic(params);
  CHECK(dataset_to_json(a) == dataset_to_json(b));

  params.group_density = 0.0;
  const auto isolated = gen_synthetic(params);
  const auto metrics = evaluate_dataset(isolated, VisitOrder::Total, 90.0);
  CHECK(metrics.shared.mean_retries == metrics.baseline.mean_retries);
  CHECK(metrics.savings_retries_abs == 0.0);

  params.group_density = 1.0;
  for (const auto& tree : gen_synthetic(params)) {
    CHECK(run_site(tree, true, VisitOrder::Total).retry_handshakes == 1);
  }
}

TEST_CASE("bad generator parameters are rejected") {
  SynthParams params;
  params.site_count = 0;
  CHECK_THROWS_AS(gen_synthetic(params), std::invalid_argument);
  params = {};
  params.depth_min = 3;
  params.depth_max = 2;
  CHECK_THROWS_AS(gen_synthetic(params), std::invalid_argument);
  params = {};
  params.group_density = 1.5;
  CHECK_THROWS_AS(gen_synthetic(params), std::invalid_argument);
  params = {};
  params.fanout_min = 2;
  params.fanout_max = 1;
  CHECK_THROWS_AS(gen_synthetic(params), std::invalid_argument);
}

TEST_CASE("synthetic trees round-trip through the dataset format") {
  SynthParams params;
  params.seed = 77;
  params.site_count = 5;
  const auto trees = gen_synthetic(params);
  const auto reparsed = parse_dataset(dataset_to_json(trees));
  REQUIRE(reparsed.size() == trees.size());
  CHECK(dataset_to_json(reparsed) == dataset_to_json(trees));
}

TEST_CASE("histogram shares sum to one") {
  SynthParams params;
  params.seed = 5;
  params.site_count = 64;
  const auto metrics = evaluate_dataset(gen_synthetic(params), VisitOrder::Total, 90.0);
  for (const auto* summary : {&metrics.baseline, &metrics.shared}) {
    double retries_sum = 0.0;
    for (const auto& [_, share] : summary->histogram_retries) retries_sum += share;
    CHECK(retries_sum == doctest::Approx(1.0).epsilon(1e-9));
    double path_sum = 0.0;
    for (const auto& [_, share] : summary->histogram_path) path_sum += share;
    CHECK(path_sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("csv report has a header plus one row per histogram bin") {
  const auto trees = load_dataset("fixtures/mini.json");
  const auto metrics = evaluate_dataset(trees, VisitOrder::Total, 90.0);
  const std::string csv = emit_report_csv(metrics, ReportSections::Both);

  std::size_t lines = 0;
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    ++lines;
    rows.push_back(line);
  }
  const std::size_t bins =
      metrics.baseline.histogram_retries.size() + metrics.baseline.histogram_path.size() +
      metrics.shared.histogram_retries.size() + metrics.shared.histogram_path.size();
  CHECK(lines == 1 + bins);
  CHECK(rows[0] == "histogram,mode,count,share");

  // Shares per histogram column still sum to one after formatting.
  double baseline_retries = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::istringstream row(rows[i]);
    std::string hist, mode, count, share;
    std::getline(row, hist, ',');
    std::getline(row, mode, ',');
    std::getline(row, count, ',');
    std::getline(row, share, ',');
    if (hist == "retries" && mode == "baseline") baseline_retries += std::stod(share);
  }
  CHECK(baseline_retries == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("json report round-trips and keeps the documented sections") {
  const auto trees = load_dataset("fixtures/mini.json");
  const auto metrics = evaluate_dataset(trees, VisitOrder::Total, 90.0);

  const std::string both = emit_report_json(metrics, ReportSections::Both);
  CHECK(both.find("\"baseline\"") != std::string::npos);
  CHECK(both.find("\"shared\"") != std::string::npos);
  CHECK(both.find("\"savings\"") != std::string::npos);

  const std::string base_only = emit_report_json(metrics, ReportSections::BaselineOnly);
  CHECK(base_only.find("\"baseline\"") != std::string::npos);
  CHECK(base_only.find("\"shared\"") == std::string::npos);
  CHECK(base_only.find("\"savings\"") == std::string::npos);
}
