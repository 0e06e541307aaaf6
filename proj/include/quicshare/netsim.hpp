#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "quicshare/handshake.hpp"
#include "quicshare/ip.hpp"

namespace quicshare::netsim {

struct ScriptError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ClientSpec {
  std::string name;
  IpAddress ip;
};

struct StepSpec {
  std::string client;
  std::string host;
  std::optional<std::int64_t> at_ms;  // absent: starts when the client's previous step ends
  bool use_ticket = false;
  Bytes early_data;  // sent at the Early level when a ticket is offered
};

/// Pre-handshake state granted to a client, as if from an earlier session.
struct PreseedSpec {
  std::string client;
  std::string host;
  bool ticket = false;
  bool token = false;
};

struct SimConfig {
  std::uint64_t seed = 1;
  std::int64_t default_one_way_latency_ms = 45;
  std::int64_t token_lifetime_ms = 600'000;
  std::vector<handshake::ServerConfig> servers;
  std::map<std::string, std::int64_t> latency_overrides;  // host -> one-way ms
  std::vector<ClientSpec> clients;
  std::vector<PreseedSpec> preseeds;
  std::vector<StepSpec> steps;

  /// Parses the scenario JSON. Throws ScriptError on malformed input or
  /// references to unconfigured hosts/clients.
  static SimConfig from_json(const std::string& text);
  static SimConfig from_file(const std::string& path);
};

struct EventRecord {
  std::int64_t time_ms = 0;
  std::string actor;
  std::string event;
  int conn_id = -1;
  std::string detail;

  std::string to_line() const;
};

struct ConnectionReport {
  int conn_id = -1;
  std::string client;
  std::string host;
  std::int64_t start_ms = 0;
  std::optional<std::int64_t> established_ms;
  bool established = false;
  bool failed = false;
  std::string error;
  int round_trips = -1;  // to first client app/early data; -1 when incomplete
  int consumed_without_benefit = 0;
  handshake::MessageTrace trace;
};

struct SimResult {
  std::vector<EventRecord> events;
  std::vector<ConnectionReport> connections;
  std::map<std::string, int> expensive_ops_by_server;
  int expensive_ops_total = 0;

  std::string event_log_text() const;  // one JSON object per line
  std::string traces_text() const;     // per-connection trace blocks
  std::string summary_json() const;
};

/// Runs every scripted connection to completion or failure. Deterministic:
/// equal configs produce byte-identical event logs.
SimResult run_scenario(const SimConfig& config);

struct AttackOptions {
  handshake::Policy policy = handshake::Policy::Strict;
  bool replay_captured_token = false;  // replay a token captured on the attacker's own connection
  std::uint64_t seed = 1;
};

struct AttackReport {
  int attempts = 0;
  int retries_sent = 0;
  int expensive_ops = 0;
  std::uint64_t bytes_to_victim = 0;
  std::uint64_t bytes_from_attacker = 0;

  double amplification() const {
    return bytes_from_attacker == 0
               ? 0.0
               : static_cast<double>(bytes_to_victim) / static_cast<double>(bytes_from_attacker);
  }
  std::string to_json() const;
};

/// Floods the server with ClientHellos whose claimed source is the victim.
/// Under strict validation the server answers each with a single Retry and
/// performs no expensive operations.
AttackReport run_spoof_attack(const handshake::ServerConfig& server, const IpAddress& victim_ip,
                              int attempts, const AttackOptions& options);

}  // namespace quicshare::netsim
