#include "quicshare/ip.hpp"

#include <arpa/inet.h>

#include <cstring>

namespace quicshare {

std::optional<IpAddress> IpAddress::parse(const std::string& text) {
  IpAddress out{};
  in6_addr v6{};
  if (inet_pton(AF_INET6, text.c_str(), &v6) == 1) {
    std::memcpy(out.bytes.data(), &v6, 16);
    return out;
  }
  in_addr v4{};
  if (inet_pton(AF_INET, text.c_str(), &v4) == 1) {
    out.bytes[10] = 0xff;
    out.bytes[11] = 0xff;
    std::memcpy(out.bytes.data() + 12, &v4, 4);
    return out;
  }
  return std::nullopt;
}

std::string IpAddress::to_string() const {
  bool mapped_v4 = bytes[10] == 0xff && bytes[11] == 0xff;
  for (int i = 0; i < 10 && mapped_v4; ++i) mapped_v4 = bytes[i] == 0;
  char buf[INET6_ADDRSTRLEN] = {};
  if (mapped_v4) {
    in_addr v4{};
    std::memcpy(&v4, bytes.data() + 12, 4);
    inet_ntop(AF_INET, &v4, buf, sizeof(buf));
  } else {
    in6_addr v6{};
    std::memcpy(&v6, bytes.data(), 16);
    inet_ntop(AF_INET6, &v6, buf, sizeof(buf));
  }
  return buf;
}

}  // namespace quicshare
