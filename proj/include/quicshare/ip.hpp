#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>

namespace quicshare {

/// A client address as carried in validation tokens: 16 bytes, IPv6 layout.
/// IPv4 addresses are stored in IPv4-mapped form (::ffff:a.b.c.d).
struct IpAddress {
  std::array<std::uint8_t, 16> bytes{};

  static std::optional<IpAddress> parse(const std::string& text);
  std::string to_string() const;

  auto operator<=>(const IpAddress&) const = default;
};

}  // namespace quicshare
