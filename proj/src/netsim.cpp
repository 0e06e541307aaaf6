#include "quicshare/netsim.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace quicshare::netsim {

namespace {

using handshake::ClientPhase;
using handshake::Direction;
using handshake::EncryptionLevel;
using handshake::HandshakeMessage;
using handshake::MsgKind;
using handshake::Policy;
using json = nlohmann::ordered_json;

constexpr std::string_view kAttackerOwnIp = "198.51.100.99";

struct Event {
  std::int64_t time_ms = 0;
  std::uint64_t seq = 0;
  enum class Kind { StartStep, Deliver } kind = Kind::StartStep;
  std::size_t step_index = 0;                 // StartStep
  int conn_id = -1;                           // Deliver
  bool to_server = false;                     // Deliver
  std::vector<HandshakeMessage> msgs;         // Deliver
};

struct EventLater {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time_ms != b.time_ms) return a.time_ms > b.time_ms;
    return a.seq > b.seq;
  }
};

std::string msg_detail(const HandshakeMessage& msg) {
  std::string out{handshake::kind_name(msg.kind)};
  out += '/';
  out += handshake::level_name(msg.level);
  out += msg.has_token() ? " token=1" : " token=0";
  return out;
}

struct Conn {
  int id = -1;
  std::string client;
  std::string host;
  handshake::ClientState cstate;
  handshake::ServerState sstate;
  std::optional<groups::Certificate> expected_cert;
  std::int64_t start_ms = 0;
  std::optional<std::int64_t> established_ms;
  bool done = false;
  std::string error;
  handshake::MessageTrace trace;
};

struct ClientRuntime {
  ClientSpec spec;
  cache::ClientStore store;
  std::vector<std::size_t> step_indices;
  std::size_t next_step = 0;

  explicit ClientRuntime(ClientSpec s, std::int64_t lifetime_ms)
      : spec(std::move(s)), store(lifetime_ms) {}
};

class Simulation {
 public:
  explicit Simulation(const SimConfig& config) : config_(config), rng_(config.seed) {}

  SimResult run() {
    setup();
    while (!queue_.empty()) {
      Event ev = queue_.top();
      queue_.pop();
      now_ = ev.time_ms;
      if (ev.kind == Event::Kind::StartStep) {
        start_step(ev.step_index);
      } else {
        deliver(ev);
      }
    }
    return finalize();
  }

 private:
  void setup() {
    for (const auto& server : config_.servers) {
      if (!servers_.emplace(server.host, &server).second) {
        throw ScriptError("duplicate server host: " + server.host);
      }
      const groups::GroupId group = server.token_group();
      if (!secrets_.contains(group)) {
        token::GroupSecret secret;
        rng_.fill(secret.key);
        secrets_.emplace(group, secret);
        replays_.emplace(group, token::ReplayStore{});
      }
    }
    for (const auto& client : config_.clients) {
      if (!clients_.emplace(client.name, ClientRuntime{client, config_.token_lifetime_ms}).second) {
        throw ScriptError("duplicate client name: " + client.name);
      }
    }
    for (std::size_t i = 0; i < config_.steps.size(); ++i) {
      const auto& step = config_.steps[i];
      auto it = clients_.find(step.client);
      if (it == clients_.end()) throw ScriptError("step references unknown client: " + step.client);
      if (!servers_.contains(step.host)) {
        throw ScriptError("step references unknown host: " + step.host);
      }
      it->second.step_indices.push_back(i);
    }
    for (const auto& preseed : config_.preseeds) {
      apply_preseed(preseed);
    }
    for (const auto& client : config_.clients) {
      schedule_next_step(clients_.at(client.name), 0);
    }
  }

  void apply_preseed(const PreseedSpec& preseed) {
    auto cit = clients_.find(preseed.client);
    if (cit == clients_.end()) {
      throw ScriptError("preseed references unknown client: " + preseed.client);
    }
    auto sit = servers_.find(preseed.host);
    if (sit == servers_.end()) {
      throw ScriptError("preseed references unknown host: " + preseed.host);
    }
    ClientRuntime& client = cit->second;
    const handshake::ServerConfig& server = *sit->second;
    std::string granted;
    if (preseed.ticket) {
      client.store.seed_ticket(preseed.host, server.cert);
      granted += "ticket";
    }
    if (preseed.token) {
      const groups::GroupId group = server.token_group();
      client.store.seed_group(preseed.host, group);
      Bytes tok = token::issue_token(secrets_.at(group), group, client.spec.ip, 0, rng_);
      client.store.tokens().store(group, std::move(tok), 0, preseed.host);
      if (!granted.empty()) granted += "+";
      granted += "token";
    }
    log(0, "client:" + preseed.client, "preseed", -1, preseed.host + " " + granted);
  }

  void schedule_next_step(ClientRuntime& client, std::int64_t earliest_ms) {
    if (client.next_step >= client.step_indices.size()) return;
    const std::size_t index = client.step_indices[client.next_step];
    ++client.next_step;
    const auto& step = config_.steps[index];
    const std::int64_t at = step.at_ms ? std::max(*step.at_ms, earliest_ms) : earliest_ms;
    push_event(Event{at, next_seq(), Event::Kind::StartStep, index, -1, false, {}});
  }

  void start_step(std::size_t index) {
    const StepSpec& step = config_.steps[index];
    ClientRuntime& client = clients_.at(step.client);
    const handshake::ServerConfig& server = *servers_.at(step.host);

    conns_.push_back(Conn{});
    Conn& conn = conns_.back();
    conn.id = static_cast<int>(conns_.size()) - 1;
    conn.client = step.client;
    conn.host = step.host;
    conn.start_ms = now_;
    conn.sstate.policy = server.policy;
    conn.sstate.claimed_addr = client.spec.ip;

    std::optional<handshake::ResumptionTicket> ticket;
    if (step.use_ticket) {
      if (auto cert = client.store.ticket_cert_for(step.host)) {
        ticket = handshake::ResumptionTicket{*cert};
        conn.expected_cert = *cert;
      }
    }

    log(now_, "client:" + step.client, "conn_start", conn.id, step.host);
    auto started = handshake::client_start(step.host, client.store, ticket,
                                           ticket ? step.early_data : Bytes{}, now_);
    conn.cstate = std::move(started.state);
    send(conn, true, std::move(started.flight));
  }

  void deliver(Event& ev) {
    Conn& conn = conns_[static_cast<std::size_t>(ev.conn_id)];
    const std::string actor =
        ev.to_server ? "server:" + conn.host : "client:" + conn.client;
    for (const auto& msg : ev.msgs) {
      log(now_, actor, "deliver", conn.id, msg_detail(msg));
    }
    if (conn.done) return;
    if (ev.to_server) {
      deliver_to_server(conn, ev.msgs);
    } else {
      deliver_to_client(conn, ev.msgs);
    }
  }

  void deliver_to_server(Conn& conn, const std::vector<HandshakeMessage>& msgs) {
    const handshake::ServerConfig& server = *servers_.at(conn.host);
    const groups::GroupId group = server.token_group();
    std::vector<HandshakeMessage> responses;
    for (const auto& msg : msgs) {
      switch (msg.kind) {
        case MsgKind::ClientHello: {
          auto out = handshake::server_on_client_hello(conn.sstate, msg, server,
                                                       secrets_.at(group), replays_.at(group),
                                                       rng_, now_);
          for (auto& m : out) responses.push_back(std::move(m));
          break;
        }
        case MsgKind::Finished:
          handshake::server_on_client_finished(conn.sstate, msg);
          if (conn.sstate.phase == handshake::ServerPhase::Established) {
            log(now_, "server:" + conn.host, "server_established", conn.id, "");
          }
          break;
        case MsgKind::AppData:
          break;  // request payload; nothing to answer in this model
        default:
          conn.sstate.phase = handshake::ServerPhase::Failed;
          conn.sstate.error = "MalformedMessage";
          break;
      }
    }
    if (conn.sstate.phase == handshake::ServerPhase::Failed && !conn.done) {
      fail_connection(conn, conn.sstate.error.value_or("ServerFailed"));
      return;
    }
    if (!responses.empty()) send(conn, false, std::move(responses));
  }

  void deliver_to_client(Conn& conn, const std::vector<HandshakeMessage>& msgs) {
    ClientRuntime& client = clients_.at(conn.client);
    if (msgs.size() == 1 && msgs[0].kind == MsgKind::Retry) {
      auto hello = handshake::client_on_retry(conn.cstate, msgs[0]);
      if (!hello) {
        fail_connection(conn, conn.cstate.error.value_or("ClientFailed"));
        return;
      }
      send(conn, true, {std::move(*hello)});
      return;
    }

    auto responses = handshake::client_on_server_flight(conn.cstate, msgs, conn.expected_cert);
    if (conn.cstate.phase == ClientPhase::Failed) {
      fail_connection(conn, conn.cstate.error.value_or("ClientFailed"));
      return;
    }
    if (conn.cstate.phase == ClientPhase::Established) {
      conn.established_ms = now_;
      log(now_, "client:" + conn.client, "established", conn.id,
          "group_bit=" + std::to_string(conn.cstate.observed_group_bit.value_or(-1)));
      client.store.record_established(conn.host, *conn.cstate.anchor_cert,
                                      conn.cstate.observed_group_bit.value_or(0),
                                      conn.cstate.received_new_token, now_);
      if (conn.cstate.received_new_token) {
        const groups::GroupId g = cache::group_for_connection(
            *conn.cstate.anchor_cert, conn.cstate.observed_group_bit.value_or(0), conn.host);
        log(now_, "client:" + conn.client, "token_deposit", conn.id, g.hex());
      }
    }
    if (!responses.empty()) send(conn, true, std::move(responses));
    if (conn.cstate.phase == ClientPhase::Established) {
      complete_connection(conn);
    }
  }

  void send(Conn& conn, bool to_server, std::vector<HandshakeMessage> msgs) {
    const std::string actor = to_server ? "client:" + conn.client : "server:" + conn.host;
    const Direction direction = to_server ? Direction::ClientToServer : Direction::ServerToClient;
    for (const auto& msg : msgs) {
      conn.trace.push_back({now_, direction, msg.kind, msg.level, msg.has_token()});
      log(now_, actor, "send", conn.id, msg_detail(msg));
    }
    push_event(Event{now_ + latency_for(conn.host), next_seq(), Event::Kind::Deliver, 0, conn.id,
                     to_server, std::move(msgs)});
  }

  std::int64_t latency_for(const std::string& host) const {
    auto it = config_.latency_overrides.find(host);
    return it != config_.latency_overrides.end() ? it->second
                                                 : config_.default_one_way_latency_ms;
  }

  void complete_connection(Conn& conn) {
    conn.done = true;
    schedule_next_step(clients_.at(conn.client), now_);
  }

  void fail_connection(Conn& conn, std::string error) {
    conn.done = true;
    conn.error = std::move(error);
    log(now_, "client:" + conn.client, "failed", conn.id, conn.error);
    schedule_next_step(clients_.at(conn.client), now_);
  }

  void log(std::int64_t t, std::string actor, std::string event, int conn_id, std::string detail) {
    result_.events.push_back(EventRecord{t, std::move(actor), std::move(event), conn_id,
                                         std::move(detail)});
  }

  void push_event(Event ev) { queue_.push(std::move(ev)); }
  std::uint64_t next_seq() { return seq_++; }

  SimResult finalize() {
    for (const auto& conn : conns_) {
      ConnectionReport report;
      report.conn_id = conn.id;
      report.client = conn.client;
      report.host = conn.host;
      report.start_ms = conn.start_ms;
      report.established_ms = conn.established_ms;
      report.established = conn.cstate.phase == ClientPhase::Established;
      report.failed = !report.established;
      report.error = conn.error;
      report.consumed_without_benefit = conn.cstate.consumed_without_benefit;
      report.trace = conn.trace;
      try {
        report.round_trips = handshake::rtt_to_first_app_data(conn.trace);
      } catch (const handshake::TraceError&) {
        report.round_trips = -1;
      }
      result_.connections.push_back(std::move(report));
      result_.expensive_ops_by_server[conn.host] += conn.sstate.expensive_ops_count;
      result_.expensive_ops_total += conn.sstate.expensive_ops_count;
    }
    return std::move(result_);
  }

  const SimConfig& config_;
  token::RandomSource rng_;
  std::int64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
  std::unordered_map<std::string, const handshake::ServerConfig*> servers_;
  std::unordered_map<std::string, ClientRuntime> clients_;
  std::unordered_map<groups::GroupId, token::GroupSecret, groups::GroupIdHash> secrets_;
  std::unordered_map<groups::GroupId, token::ReplayStore, groups::GroupIdHash> replays_;
  std::vector<Conn> conns_;
  SimResult result_;
};

handshake::ServerConfig parse_server(const json& j) {
  handshake::ServerConfig server;
  server.host = j.at("host").get<std::string>();
  std::vector<std::string> sans;
  if (j.contains("sans")) {
    for (const auto& s : j.at("sans")) sans.push_back(s.get<std::string>());
  } else {
    sans.push_back(server.host);
  }
  server.cert = groups::Certificate::make(
      j.value("cert_id", "cert-" + server.host), std::move(sans));
  server.validation_group = j.value("validation_group", 0);
  if (server.validation_group != 0 && server.validation_group != 1) {
    throw ScriptError("validation_group must be 0 or 1 for host " + server.host);
  }
  const std::string policy = j.value("policy", "strict");
  if (policy == "strict") {
    server.policy = Policy::Strict;
  } else if (policy == "relaxed") {
    server.policy = Policy::Relaxed;
  } else {
    throw ScriptError("unknown policy '" + policy + "' for host " + server.host);
  }
  server.misconfigured = j.value("misconfigured", false);
  server.send_app_data = j.value("app_data", false);
  server.token_max_age_ms = j.value("token_max_age_ms", token::kDefaultMaxAgeMs);
  return server;
}

}  // namespace

SimConfig SimConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ScriptError(std::string("scenario parse error: ") + e.what());
  }
  try {
    SimConfig config;
    config.seed = j.value("seed", 1ull);
    config.default_one_way_latency_ms = j.value("latency_ms", 45);
    config.token_lifetime_ms = j.value("token_lifetime_ms", 600'000);
    for (const auto& js : j.at("servers")) {
      auto server = parse_server(js);
      if (js.contains("latency_ms")) {
        config.latency_overrides[server.host] = js.at("latency_ms").get<std::int64_t>();
      }
      config.servers.push_back(std::move(server));
    }
    for (const auto& jc : j.at("clients")) {
      ClientSpec client;
      client.name = jc.at("name").get<std::string>();
      const std::string ip = jc.value("ip", "203.0.113.5");
      auto parsed = IpAddress::parse(ip);
      if (!parsed) throw ScriptError("bad client ip: " + ip);
      client.ip = *parsed;
      config.clients.push_back(std::move(client));
    }
    if (j.contains("preseed")) {
      for (const auto& jp : j.at("preseed")) {
        PreseedSpec preseed;
        preseed.client = jp.at("client").get<std::string>();
        preseed.host = jp.at("host").get<std::string>();
        preseed.ticket = jp.value("ticket", false);
        preseed.token = jp.value("token", false);
        config.preseeds.push_back(std::move(preseed));
      }
    }
    for (const auto& js : j.at("steps")) {
      StepSpec step;
      step.client = js.at("client").get<std::string>();
      step.host = js.at("host").get<std::string>();
      if (js.contains("at_ms")) step.at_ms = js.at("at_ms").get<std::int64_t>();
      step.use_ticket = js.value("use_ticket", false);
      const std::string early = js.value("early_data", "");
      step.early_data = Bytes(early.begin(), early.end());
      config.steps.push_back(std::move(step));
    }
    return config;
  } catch (const json::exception& e) {
    throw ScriptError(std::string("scenario schema error: ") + e.what());
  }
}

SimConfig SimConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScriptError("cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string EventRecord::to_line() const {
  std::ostringstream out;
  out << "{\"t\":" << time_ms << ",\"actor\":\"" << actor << "\",\"ev\":\"" << event
      << "\",\"conn\":" << conn_id << ",\"detail\":\"" << detail << "\"}";
  return out.str();
}

std::string SimResult::event_log_text() const {
  std::string out;
  for (const auto& ev : events) {
    out += ev.to_line();
    out += '\n';
  }
  return out;
}

std::string SimResult::traces_text() const {
  std::string out;
  for (const auto& conn : connections) {
    out += "# conn " + std::to_string(conn.conn_id) + " client=" + conn.client +
           " host=" + conn.host + " rtt=" + std::to_string(conn.round_trips) + "\n";
    for (const auto& rec : conn.trace) {
      out += handshake::trace_line(rec);
      out += '\n';
    }
  }
  return out;
}

std::string SimResult::summary_json() const {
  json out;
  out["connections"] = json::array();
  for (const auto& conn : connections) {
    json jc;
    jc["conn"] = conn.conn_id;
    jc["client"] = conn.client;
    jc["host"] = conn.host;
    jc["established"] = conn.established;
    jc["start_ms"] = conn.start_ms;
    jc["established_ms"] = conn.established_ms ? json(*conn.established_ms) : json(nullptr);
    jc["round_trips"] = conn.round_trips;
    jc["consumed_without_benefit"] = conn.consumed_without_benefit;
    if (!conn.error.empty()) jc["error"] = conn.error;
    out["connections"].push_back(std::move(jc));
  }
  json ops;
  for (const auto& [host, count] : expensive_ops_by_server) ops[host] = count;
  out["expensive_ops_by_server"] = std::move(ops);
  out["expensive_ops_total"] = expensive_ops_total;
  return out.dump(2);
}

SimResult run_scenario(const SimConfig& config) {
  Simulation sim(config);
  return sim.run();
}

AttackReport run_spoof_attack(const handshake::ServerConfig& server, const IpAddress& victim_ip,
                              int attempts, const AttackOptions& options) {
  token::RandomSource rng(options.seed);
  token::GroupSecret secret;
  rng.fill(secret.key);
  token::ReplayStore replay;

  handshake::ServerConfig cfg = server;
  cfg.policy = options.policy;

  Bytes captured;
  if (options.replay_captured_token) {
    // The attacker first obtains a genuine token on its own address, then
    // replays it with the victim's spoofed source.
    handshake::ServerState own{};
    own.policy = Policy::Strict;
    own.claimed_addr = *IpAddress::parse(std::string(kAttackerOwnIp));
    HandshakeMessage hello{};
    hello.kind = MsgKind::ClientHello;
    hello.level = EncryptionLevel::None;
    handshake::ServerConfig strict_cfg = server;
    strict_cfg.policy = Policy::Strict;
    auto out = handshake::server_on_client_hello(own, hello, strict_cfg, secret, replay, rng, 0);
    if (!out.empty() && out[0].kind == MsgKind::Retry) captured = out[0].token;
  }

  AttackReport report;
  report.attempts = attempts;
  for (int i = 0; i < attempts; ++i) {
    handshake::ServerState state{};
    state.policy = options.policy;
    state.claimed_addr = victim_ip;
    HandshakeMessage hello{};
    hello.kind = MsgKind::ClientHello;
    hello.level = EncryptionLevel::None;
    hello.token = captured;
    report.bytes_from_attacker += handshake::wire_size(MsgKind::ClientHello);
    auto responses = handshake::server_on_client_hello(state, hello, cfg, secret, replay, rng, 0);
    for (const auto& msg : responses) {
      report.bytes_to_victim += handshake::wire_size(msg.kind);
      if (msg.kind == MsgKind::Retry) ++report.retries_sent;
    }
    report.expensive_ops += state.expensive_ops_count;
  }
  return report;
}

std::string AttackReport::to_json() const {
  json out;
  out["attempts"] = attempts;
  out["retries_sent"] = retries_sent;
  out["expensive_ops"] = expensive_ops;
  out["bytes_from_attacker"] = bytes_from_attacker;
  out["bytes_to_victim"] = bytes_to_victim;
  out["amplification"] = amplification();
  return out.dump(2);
}

}  // namespace quicshare::netsim
