#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "quicshare/bytes.hpp"
#include "quicshare/digest.hpp"
#include "quicshare/groups.hpp"
#include "quicshare/ip.hpp"
#include "quicshare/token.hpp"
#include "quicshare/token_cache.hpp"

namespace quicshare::handshake {

enum class EncryptionLevel : std::uint8_t { None, Handshake, Application, Early };

enum class MsgKind : std::uint8_t {
  ClientHello,
  Retry,
  ServerHello,
  EncryptedExtensions,
  Certificate,
  CertificateVerify,
  Finished,
  AppData,
};

std::string_view kind_name(MsgKind kind);
std::string_view level_name(EncryptionLevel level);

struct TransportParams {
  int validation_group = 0;  // one-bit: 1 = cross-host validation supported
};

struct HandshakeMessage {
  MsgKind kind;
  EncryptionLevel level;
  Bytes token;  // empty = absent; Retry's validation token, Finished's banked token
  std::optional<TransportParams> transport_params;  // EncryptedExtensions only
  bool psk_offered = false;                         // ClientHello only
  Bytes payload;                                    // AppData body (any level)
  std::optional<Digest32> finished_hash;            // Finished only
  std::optional<groups::Certificate> certificate;   // Certificate only

  bool has_token() const { return !token.empty(); }
};

/// Canonical encoding used for transcript hashing. Not a wire format.
Bytes encode_message(const HandshakeMessage& msg);

/// Nominal on-wire size per message kind, used for amplification accounting.
/// ClientHello is padded to the 1200-byte minimum initial datagram.
std::size_t wire_size(MsgKind kind);

enum class Policy : std::uint8_t { Strict, Relaxed };

enum class ClientPhase : std::uint8_t { Idle, SentCH, SentCHWithToken, SentEarly, Established, Failed };
enum class ServerPhase : std::uint8_t { Idle, AwaitingToken, Proceeding, Established, Failed };

struct ClientState {
  ClientPhase phase = ClientPhase::Idle;
  std::string target_host;
  Bytes offered_token;
  bool offered_token_from_cache = false;
  bool resumption_ticket_offered = false;
  std::optional<int> observed_group_bit;
  std::optional<groups::Certificate> anchor_cert;
  bool retry_seen = false;
  int consumed_without_benefit = 0;  // cached tokens burned by servers that retried anyway
  std::optional<Bytes> received_new_token;
  Bytes early_payload;
  Bytes transcript;
  std::optional<std::string> error;
};

struct ServerState {
  ServerPhase phase = ServerPhase::Idle;
  Policy policy = Policy::Strict;
  IpAddress claimed_addr;
  int expensive_ops_count = 0;  // asymmetric-crypto-equivalent operations
  Bytes transcript;
  std::optional<std::string> error;
};

struct ServerConfig {
  std::string host;
  groups::Certificate cert;
  int validation_group = 0;
  Policy policy = Policy::Strict;
  bool misconfigured = false;  // fails to recognize tokens presented on a first ClientHello
  bool send_app_data = false;
  std::int64_t token_max_age_ms = token::kDefaultMaxAgeMs;

  /// Group identity bound into issued tokens.
  groups::GroupId token_group() const;
};

struct ResumptionTicket {
  groups::Certificate original_cert;  // identity authenticated on the original connection
};

struct ClientStart {
  ClientState state;
  std::vector<HandshakeMessage> flight;  // ClientHello, then optional Early data
};

/// Opens a connection: emits the ClientHello, attaching (and consuming) a
/// cached token for the host's group when one is usable. With a ticket the
/// hello offers the PSK and `early_payload` rides along at the Early level.
ClientStart client_start(const std::string& host, cache::ClientStore& store,
                         const std::optional<ResumptionTicket>& ticket, Bytes early_payload,
                         std::int64_t now_ms);

/// Server step for a ClientHello (first flight or post-retry echo). Returns
/// the emitted messages: a Retry when strict validation is unsatisfied,
/// otherwise the full server flight. Token checks go through
/// token::validate_token, including single-use recording.
std::vector<HandshakeMessage> server_on_client_hello(ServerState& state,
                                                     const HandshakeMessage& msg,
                                                     const ServerConfig& config,
                                                     const token::GroupSecret& secret,
                                                     token::ReplayStore& replay,
                                                     token::RandomSource& rng, std::int64_t now_ms);

/// Server step for the client's Finished.
void server_on_client_finished(ServerState& state, const HandshakeMessage& msg);

/// Client reaction to a Retry: re-emits the ClientHello with the server's
/// token. A second Retry on the same connection fails the handshake.
std::optional<HandshakeMessage> client_on_retry(ClientState& state, const HandshakeMessage& retry);

/// Client processing of the full server flight. On success returns the
/// client's Finished plus one application-data message and the state is
/// Established; on verification failure the state is Failed and the result
/// is empty.
std::vector<HandshakeMessage> client_on_server_flight(
    ClientState& state, const std::vector<HandshakeMessage>& msgs,
    const std::optional<groups::Certificate>& expected_cert);

// ---------------------------------------------------------------------------
// Trace analysis

enum class Direction : std::uint8_t { ClientToServer, ServerToClient };

struct TraceRecord {
  std::int64_t time_ms = 0;
  Direction direction = Direction::ClientToServer;
  MsgKind kind = MsgKind::ClientHello;
  EncryptionLevel level = EncryptionLevel::None;
  bool token_present = false;
};

using MessageTrace = std::vector<TraceRecord>;

struct TraceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Round trips between the client's first packet and its first send at the
/// Application or Early level: 1 for an initial handshake, 2 with a retry,
/// 0 for 0-RTT. Throws TraceError on a trace with no such send.
int rtt_to_first_app_data(const MessageTrace& trace);

/// `time_ms direction kind level token_present`, e.g. `0 c2s ClientHello none 0`.
std::string trace_line(const TraceRecord& record);

}  // namespace quicshare::handshake
