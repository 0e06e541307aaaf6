#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "quicshare/bytes.hpp"
#include "quicshare/netsim.hpp"
#include "quicshare/pageload.hpp"
#include "quicshare/token.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace quicshare;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

void write_output(const std::string& text, const std::string& output_path) {
  if (output_path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(output_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + output_path);
  out << text;
}

int run_handshake(const std::string& scenario_path, std::optional<std::uint64_t> seed,
                  std::optional<std::int64_t> latency_ms, const std::string& emit,
                  const std::string& output_path) {
  netsim::SimConfig config = netsim::SimConfig::from_file(scenario_path);
  if (seed) config.seed = *seed;
  if (latency_ms) config.default_one_way_latency_ms = *latency_ms;
  const netsim::SimResult result = netsim::run_scenario(config);
  if (emit == "events") {
    write_output(result.event_log_text(), output_path);
  } else if (emit == "traces") {
    write_output(result.traces_text(), output_path);
  } else {
    write_output(result.summary_json(), output_path);
  }
  return kExitOk;
}

int run_attack(int attempts, const std::string& policy, bool replay_token,
               const std::string& victim_ip, std::uint64_t seed, const std::string& output_path) {
  auto victim = IpAddress::parse(victim_ip);
  if (!victim) throw std::runtime_error("bad victim ip: " + victim_ip);

  handshake::ServerConfig server;
  server.host = "target.example";
  server.cert = groups::Certificate::make("cert-target", {"target.example"});
  server.validation_group = 1;

  netsim::AttackOptions options;
  options.policy = policy == "relaxed" ? handshake::Policy::Relaxed : handshake::Policy::Strict;
  options.replay_captured_token = replay_token;
  options.seed = seed;

  const netsim::AttackReport report = netsim::run_spoof_attack(server, *victim, attempts, options);
  write_output(report.to_json(), output_path);
  return kExitOk;
}

std::string pretty_table(const pageload::AggregateMetrics& metrics) {
  char buf[256];
  std::string out;
  out += "sites: " + std::to_string(metrics.sites) + "\n";
  out += "metric                      baseline    shared   savings\n";
  std::snprintf(buf, sizeof(buf), "mean retry handshakes       %8.2f  %8.2f  %8.2f\n",
                metrics.baseline.mean_retries, metrics.shared.mean_retries,
                metrics.savings_retries_abs);
  out += buf;
  std::snprintf(buf, sizeof(buf), "mean longest retry path     %8.2f  %8.2f  %8.2f\n",
                metrics.baseline.mean_longest_path, metrics.shared.mean_longest_path,
                metrics.savings_path_abs);
  out += buf;
  std::snprintf(buf, sizeof(buf), "delay saving at rtt %.0f ms: %.1f ms\n", metrics.rtt_ms,
                metrics.delay_saving_ms);
  out += buf;
  return out;
}

int run_evaluate(const std::string& dataset_path, const std::string& order_name, double rtt_ms,
                 const std::string& shared, const std::string& format, bool lenient, bool pretty,
                 const std::string& output_path) {
  std::vector<std::string> skipped;
  const auto trees = pageload::load_dataset(dataset_path, lenient, &skipped);
  for (const auto& site : skipped) {
    std::cerr << "skipped malformed tree: " << site << "\n";
  }
  const auto order =
      order_name == "level" ? pageload::VisitOrder::Level : pageload::VisitOrder::Total;
  const auto metrics = pageload::evaluate_dataset(trees, order, rtt_ms);

  pageload::ReportSections sections = pageload::ReportSections::Both;
  if (shared == "on") sections = pageload::ReportSections::SharedOnly;
  if (shared == "off") sections = pageload::ReportSections::BaselineOnly;

  if (pretty) {
    write_output(pretty_table(metrics), output_path);
  } else if (format == "csv") {
    write_output(pageload::emit_report_csv(metrics, sections), output_path);
  } else {
    write_output(pageload::emit_report_json(metrics, sections), output_path);
  }
  return kExitOk;
}

int run_synth(const pageload::SynthParams& params, const std::string& output_path) {
  const auto trees = pageload::gen_synthetic(params);
  write_output(pageload::dataset_to_json(trees), output_path);
  return kExitOk;
}

int run_token_decode(const std::string& hex, const std::string& output_path) {
  const auto bytes = from_hex(hex);
  if (!bytes) throw std::runtime_error("token is not valid hex");
  token::DecodeError error{};
  const auto fields = token::decode_token(*bytes, &error);
  if (!fields) {
    throw std::runtime_error(error == token::DecodeError::BadLength
                                 ? "bad token length: expected 89 bytes, got " +
                                       std::to_string(bytes->size())
                                 : "unknown token version");
  }
  json out;
  out["length"] = bytes->size();
  out["version"] = fields->version;
  out["group_id"] = fields->group_id.hex();
  out["client_ip"] = fields->client_ip.to_string();
  out["issued_at_ms"] = fields->issued_at_ms;
  out["nonce"] = to_hex(fields->nonce);
  out["tag"] = to_hex(std::span(*bytes).subspan(token::kAuthenticatedPrefixSize));
  write_output(out.dump(2), output_path);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QUIC-style handshake simulator with shared address validation across hostnames"};
  app.require_subcommand(1);

  std::string output_path;
  app.add_option("--output", output_path, "Write results to a file instead of stdout");

  // handshake
  auto* handshake_cmd = app.add_subcommand("handshake", "Run a scripted handshake scenario");
  std::string scenario_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::int64_t> latency_override;
  std::string emit = "events";
  handshake_cmd->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  handshake_cmd->add_option("--seed", seed_override, "Override the scenario seed");
  handshake_cmd->add_option("--latency-ms", latency_override, "Override the one-way latency");
  handshake_cmd->add_option("--emit", emit, "events|traces|summary")
      ->check(CLI::IsMember({"events", "traces", "summary"}));

  // attack
  auto* attack_cmd = app.add_subcommand("attack", "Run the spoofed-source reflection attack");
  int attempts = 1000;
  std::string policy = "strict";
  bool replay_token = false;
  std::string victim_ip = "192.0.2.66";
  std::uint64_t attack_seed = 1;
  attack_cmd->add_option("--attempts", attempts, "Spoofed ClientHello count")
      ->check(CLI::PositiveNumber);
  attack_cmd->add_option("--policy", policy, "strict|relaxed")
      ->check(CLI::IsMember({"strict", "relaxed"}));
  attack_cmd->add_flag("--replay-token", replay_token,
                       "Replay a token captured on the attacker's own connection");
  attack_cmd->add_option("--victim-ip", victim_ip, "Spoofed source address");
  attack_cmd->add_option("--seed", attack_seed, "Deterministic seed");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Replay domain trees and compute metrics");
  std::string dataset_path;
  std::string order_name = "total";
  double rtt_ms = 90.0;
  std::string shared = "both";
  std::string format = "json";
  bool lenient = false;
  bool pretty = false;
  evaluate_cmd->add_option("--dataset", dataset_path, "Dataset JSON file")->required();
  evaluate_cmd->add_option("--order", order_name, "total|level")
      ->check(CLI::IsMember({"total", "level"}));
  evaluate_cmd->add_option("--rtt-ms", rtt_ms, "Round-trip time used for delay metrics");
  evaluate_cmd->add_option("--shared", shared, "on|off|both")
      ->check(CLI::IsMember({"on", "off", "both"}));
  evaluate_cmd->add_option("--format", format, "json|csv")
      ->check(CLI::IsMember({"json", "csv"}));
  evaluate_cmd->add_flag("--lenient", lenient, "Skip malformed trees instead of failing");
  evaluate_cmd->add_flag("--pretty", pretty, "Human-readable table instead of JSON");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  pageload::SynthParams params;
  synth_cmd->add_option("--seed", params.seed, "Deterministic seed");
  synth_cmd->add_option("--sites", params.site_count, "Number of sites")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--depth-min", params.depth_min, "Minimum tree depth");
  synth_cmd->add_option("--depth-max", params.depth_max, "Maximum tree depth");
  synth_cmd->add_option("--fanout-min", params.fanout_min, "Minimum children per node");
  synth_cmd->add_option("--fanout-max", params.fanout_max, "Maximum children per node");
  synth_cmd->add_option("--group-density", params.group_density,
                        "Probability of joining an earlier node's group [0,1]");

  // token-decode
  auto* decode_cmd = app.add_subcommand("token-decode", "Parse a token (no authenticity check)");
  std::string token_hex;
  decode_cmd->add_option("token", token_hex, "Token as hex")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (handshake_cmd->parsed()) {
      return run_handshake(scenario_path, seed_override, latency_override, emit, output_path);
    }
    if (attack_cmd->parsed()) {
      return run_attack(attempts, policy, replay_token, victim_ip, attack_seed, output_path);
    }
    if (evaluate_cmd->parsed()) {
      return run_evaluate(dataset_path, order_name, rtt_ms, shared, format, lenient, pretty,
                          output_path);
    }
    if (synth_cmd->parsed()) {
      return run_synth(params, output_path);
    }
    if (decode_cmd->parsed()) {
      return run_token_decode(token_hex, output_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
