#include "quicshare/handshake.hpp"

#include <algorithm>

#include "quicshare/digest.hpp"

namespace quicshare::handshake {

namespace {

constexpr std::string_view kClientRequestPayload = "GET /";

void append_transcript(Bytes& transcript, const HandshakeMessage& msg) {
  // Application data is not part of the handshake transcript.
  if (msg.kind == MsgKind::AppData) return;
  const Bytes encoded = encode_message(msg);
  transcript.insert(transcript.end(), encoded.begin(), encoded.end());
}

Digest32 transcript_hash(const Bytes& transcript) { return sha256(transcript); }

HandshakeMessage make_app_data(EncryptionLevel level, Bytes payload) {
  HandshakeMessage msg{};
  msg.kind = MsgKind::AppData;
  msg.level = level;
  msg.payload = std::move(payload);
  return msg;
}

}  // namespace

std::string_view kind_name(MsgKind kind) {
  switch (kind) {
    case MsgKind::ClientHello: return "ClientHello";
    case MsgKind::Retry: return "Retry";
    case MsgKind::ServerHello: return "ServerHello";
    case MsgKind::EncryptedExtensions: return "EncryptedExtensions";
    case MsgKind::Certificate: return "Certificate";
    case MsgKind::CertificateVerify: return "CertificateVerify";
    case MsgKind::Finished: return "Finished";
    case MsgKind::AppData: return "AppData";
  }
  return "Unknown";
}

std::string_view level_name(EncryptionLevel level) {
  switch (level) {
    case EncryptionLevel::None: return "none";
    case EncryptionLevel::Handshake: return "handshake";
    case EncryptionLevel::Application: return "application";
    case EncryptionLevel::Early: return "early";
  }
  return "unknown";
}

Bytes encode_message(const HandshakeMessage& msg) {
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(msg.kind));
  out.push_back(static_cast<std::uint8_t>(msg.level));
  std::uint8_t flags = 0;
  if (msg.psk_offered) flags |= 0x01;
  if (msg.has_token()) flags |= 0x02;
  if (msg.transport_params) flags |= 0x04;
  if (msg.certificate) flags |= 0x08;
  if (msg.finished_hash) flags |= 0x10;
  out.push_back(flags);
  if (msg.has_token()) {
    put_u16_be(out, static_cast<std::uint16_t>(msg.token.size()));
    out.insert(out.end(), msg.token.begin(), msg.token.end());
  }
  if (msg.transport_params) {
    out.push_back(static_cast<std::uint8_t>(msg.transport_params->validation_group));
  }
  if (msg.certificate) {
    put_u16_be(out, static_cast<std::uint16_t>(msg.certificate->cert_id.size()));
    out.insert(out.end(), msg.certificate->cert_id.begin(), msg.certificate->cert_id.end());
    put_u16_be(out, static_cast<std::uint16_t>(msg.certificate->san_hostnames.size()));
    for (const auto& san : msg.certificate->san_hostnames) {
      put_u16_be(out, static_cast<std::uint16_t>(san.size()));
      out.insert(out.end(), san.begin(), san.end());
    }
  }
  put_u32_be(out, static_cast<std::uint32_t>(msg.payload.size()));
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  if (msg.finished_hash) {
    out.insert(out.end(), msg.finished_hash->begin(), msg.finished_hash->end());
  }
  return out;
}

std::size_t wire_size(MsgKind kind) {
  switch (kind) {
    case MsgKind::ClientHello: return 1200;
    case MsgKind::Retry: return 256;
    case MsgKind::ServerHello: return 160;
    case MsgKind::EncryptedExtensions: return 96;
    case MsgKind::Certificate: return 1024;
    case MsgKind::CertificateVerify: return 264;
    case MsgKind::Finished: return 96;
    case MsgKind::AppData: return 512;
  }
  return 0;
}

groups::GroupId ServerConfig::token_group() const {
  if (validation_group == 1) return groups::group_of_certificate(cert);
  return groups::group_of_hostname(host);
}

ClientStart client_start(const std::string& host, cache::ClientStore& store,
                         const std::optional<ResumptionTicket>& ticket, Bytes early_payload,
                         std::int64_t now_ms) {
  ClientStart result;
  ClientState& state = result.state;
  state.target_host = host;
  state.resumption_ticket_offered = ticket.has_value();

  if (auto cached = store.take_token_for_host(host, now_ms)) {
    state.offered_token = std::move(*cached);
    state.offered_token_from_cache = true;
  }

  HandshakeMessage hello{};
  hello.kind = MsgKind::ClientHello;
  hello.level = EncryptionLevel::None;
  hello.token = state.offered_token;
  hello.psk_offered = ticket.has_value();
  append_transcript(state.transcript, hello);
  result.flight.push_back(std::move(hello));

  if (ticket && !early_payload.empty()) {
    state.early_payload = early_payload;
    result.flight.push_back(make_app_data(EncryptionLevel::Early, std::move(early_payload)));
    state.phase = ClientPhase::SentEarly;
  } else if (!state.offered_token.empty()) {
    state.phase = ClientPhase::SentCHWithToken;
  } else {
    state.phase = ClientPhase::SentCH;
  }
  return result;
}

std::vector<HandshakeMessage> server_on_client_hello(ServerState& state,
                                                     const HandshakeMessage& msg,
                                                     const ServerConfig& config,
                                                     const token::GroupSecret& secret,
                                                     token::ReplayStore& replay,
                                                     token::RandomSource& rng,
                                                     std::int64_t now_ms) {
  if (msg.kind != MsgKind::ClientHello || msg.level != EncryptionLevel::None) {
    state.phase = ServerPhase::Failed;
    state.error = "MalformedMessage";
    return {};
  }
  if (state.phase != ServerPhase::Idle && state.phase != ServerPhase::AwaitingToken) {
    state.phase = ServerPhase::Failed;
    state.error = "MalformedMessage";
    return {};
  }

  const bool first_hello = state.phase == ServerPhase::Idle;
  bool token_ok = false;
  if (msg.has_token()) {
    if (config.misconfigured && first_hello) {
      // Broken group member: the legitimately cached token is never examined,
      // so the client spent it for nothing.
      token_ok = false;
    } else {
      token_ok = token::validate_token(secret, msg.token, state.claimed_addr, now_ms,
                                       config.token_max_age_ms, replay)
                     .accepted;
    }
  }

  append_transcript(state.transcript, msg);

  const bool proceed = state.policy == Policy::Relaxed || token_ok;
  if (!proceed) {
    if (!first_hello) {
      // The echoed token failed; one retry per connection, so give up.
      state.phase = ServerPhase::Failed;
      state.error = "TokenRejectedAfterRetry";
      return {};
    }
    HandshakeMessage retry{};
    retry.kind = MsgKind::Retry;
    retry.level = EncryptionLevel::None;
    retry.token = token::issue_token(secret, config.token_group(), state.claimed_addr, now_ms, rng);
    append_transcript(state.transcript, retry);
    state.phase = ServerPhase::AwaitingToken;
    return {retry};
  }

  // Address validated (or relaxed): start the key schedule.
  state.expensive_ops_count += 1;

  const bool psk_accepted = msg.psk_offered;
  std::vector<HandshakeMessage> flight;

  HandshakeMessage server_hello{};
  server_hello.kind = MsgKind::ServerHello;
  server_hello.level = EncryptionLevel::None;
  server_hello.psk_offered = psk_accepted;
  append_transcript(state.transcript, server_hello);
  flight.push_back(std::move(server_hello));

  HandshakeMessage ee{};
  ee.kind = MsgKind::EncryptedExtensions;
  ee.level = EncryptionLevel::Handshake;
  ee.transport_params = TransportParams{config.validation_group};
  append_transcript(state.transcript, ee);
  flight.push_back(std::move(ee));

  if (!psk_accepted) {
    HandshakeMessage cert{};
    cert.kind = MsgKind::Certificate;
    cert.level = EncryptionLevel::Handshake;
    cert.certificate = config.cert;
    append_transcript(state.transcript, cert);
    flight.push_back(std::move(cert));

    HandshakeMessage cv{};
    cv.kind = MsgKind::CertificateVerify;
    cv.level = EncryptionLevel::Handshake;
    append_transcript(state.transcript, cv);
    flight.push_back(std::move(cv));
  }

  HandshakeMessage fin{};
  fin.kind = MsgKind::Finished;
  fin.level = EncryptionLevel::Handshake;
  fin.finished_hash = transcript_hash(state.transcript);
  // Post-handshake token issuance rides on the server Finished; this is what
  // lets the next connection to the group skip its retry.
  fin.token = token::issue_token(secret, config.token_group(), state.claimed_addr, now_ms, rng);
  append_transcript(state.transcript, fin);
  flight.push_back(std::move(fin));

  if (config.send_app_data) {
    flight.push_back(make_app_data(EncryptionLevel::Application, Bytes{'o', 'k'}));
  }

  state.phase = ServerPhase::Proceeding;
  return flight;
}

void server_on_client_finished(ServerState& state, const HandshakeMessage& msg) {
  if (state.phase != ServerPhase::Proceeding || msg.kind != MsgKind::Finished ||
      msg.level != EncryptionLevel::Handshake) {
    state.phase = ServerPhase::Failed;
    state.error = "MalformedMessage";
    return;
  }
  const Digest32 expected = transcript_hash(state.transcript);
  if (!msg.finished_hash || *msg.finished_hash != expected) {
    state.phase = ServerPhase::Failed;
    state.error = "FinishedMismatch";
    return;
  }
  append_transcript(state.transcript, msg);
  state.phase = ServerPhase::Established;
}

std::optional<HandshakeMessage> client_on_retry(ClientState& state, const HandshakeMessage& retry) {
  if (retry.kind != MsgKind::Retry || !retry.has_token()) {
    state.phase = ClientPhase::Failed;
    state.error = "MalformedMessage";
    return std::nullopt;
  }
  if (state.phase != ClientPhase::SentCH && state.phase != ClientPhase::SentCHWithToken &&
      state.phase != ClientPhase::SentEarly) {
    state.phase = ClientPhase::Failed;
    state.error = "MalformedMessage";
    return std::nullopt;
  }
  if (state.retry_seen) {
    state.phase = ClientPhase::Failed;
    state.error = "RetryAfterRetry";
    return std::nullopt;
  }
  state.retry_seen = true;

  if (state.offered_token_from_cache) {
    // The server retried despite our cached token: spent without benefit.
    state.consumed_without_benefit += 1;
  }

  append_transcript(state.transcript, retry);

  state.offered_token = retry.token;
  state.offered_token_from_cache = false;

  HandshakeMessage hello{};
  hello.kind = MsgKind::ClientHello;
  hello.level = EncryptionLevel::None;
  hello.token = state.offered_token;
  hello.psk_offered = state.resumption_ticket_offered;
  append_transcript(state.transcript, hello);

  // Early data stays in the first flight only; after a retry the request is
  // sent at the application level once established.
  state.phase = ClientPhase::SentCHWithToken;
  return hello;
}

std::vector<HandshakeMessage> client_on_server_flight(
    ClientState& state, const std::vector<HandshakeMessage>& msgs,
    const std::optional<groups::Certificate>& expected_cert) {
  if (state.phase != ClientPhase::SentCH && state.phase != ClientPhase::SentCHWithToken &&
      state.phase != ClientPhase::SentEarly) {
    state.phase = ClientPhase::Failed;
    state.error = "MalformedMessage";
    return {};
  }

  const HandshakeMessage* fin = nullptr;
  const HandshakeMessage* ee = nullptr;
  std::optional<groups::Certificate> delivered_cert;

  for (const auto& msg : msgs) {
    switch (msg.kind) {
      case MsgKind::ServerHello:
      case MsgKind::CertificateVerify:
        append_transcript(state.transcript, msg);
        break;
      case MsgKind::EncryptedExtensions:
        ee = &msg;
        append_transcript(state.transcript, msg);
        break;
      case MsgKind::Certificate:
        delivered_cert = msg.certificate;
        append_transcript(state.transcript, msg);
        break;
      case MsgKind::Finished:
        fin = &msg;
        break;
      case MsgKind::AppData:
        break;  // server response data, not handshake
      default:
        state.phase = ClientPhase::Failed;
        state.error = "MalformedMessage";
        return {};
    }
  }

  if (fin == nullptr || ee == nullptr || !ee->transport_params) {
    state.phase = ClientPhase::Failed;
    state.error = "MalformedMessage";
    return {};
  }

  const Digest32 expected_hash = transcript_hash(state.transcript);
  if (!fin->finished_hash || *fin->finished_hash != expected_hash) {
    state.phase = ClientPhase::Failed;
    state.error = "FinishedMismatch";
    return {};
  }

  if (delivered_cert) {
    state.anchor_cert = delivered_cert;
  } else if (state.resumption_ticket_offered && expected_cert) {
    // Resumed handshake: tokens associate with the original connection's
    // certificate identity.
    state.anchor_cert = expected_cert;
  } else {
    state.phase = ClientPhase::Failed;
    state.error = "CertMissingOnInitial";
    return {};
  }

  state.observed_group_bit = ee->transport_params->validation_group;
  if (fin->has_token()) state.received_new_token = fin->token;
  append_transcript(state.transcript, *fin);

  std::vector<HandshakeMessage> out;
  HandshakeMessage client_fin{};
  client_fin.kind = MsgKind::Finished;
  client_fin.level = EncryptionLevel::Handshake;
  client_fin.finished_hash = transcript_hash(state.transcript);
  append_transcript(state.transcript, client_fin);
  out.push_back(std::move(client_fin));

  out.push_back(make_app_data(EncryptionLevel::Application,
                              Bytes(kClientRequestPayload.begin(), kClientRequestPayload.end())));

  state.phase = ClientPhase::Established;
  return out;
}

int rtt_to_first_app_data(const MessageTrace& trace) {
  std::optional<std::int64_t> first_app_send;
  for (const auto& rec : trace) {
    if (rec.direction == Direction::ClientToServer &&
        (rec.level == EncryptionLevel::Application || rec.level == EncryptionLevel::Early)) {
      first_app_send = rec.time_ms;
      break;
    }
  }
  if (!first_app_send) {
    throw TraceError("trace has no client application or early data send");
  }
  // Each distinct server-to-client arrival instant the client had to wait for
  // is one round trip.
  int round_trips = 0;
  std::optional<std::int64_t> last_counted;
  for (const auto& rec : trace) {
    if (rec.direction != Direction::ServerToClient) continue;
    if (rec.time_ms > *first_app_send) break;
    if (!last_counted || *last_counted != rec.time_ms) {
      ++round_trips;
      last_counted = rec.time_ms;
    }
  }
  return round_trips;
}

std::string trace_line(const TraceRecord& record) {
  std::string out = std::to_string(record.time_ms);
  out += record.direction == Direction::ClientToServer ? " c2s " : " s2c ";
  out += kind_name(record.kind);
  out += ' ';
  out += level_name(record.level);
  out += record.token_present ? " 1" : " 0";
  return out;
}

}  // namespace quicshare::handshake
