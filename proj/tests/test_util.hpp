#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "quicshare/ip.hpp"
#include "quicshare/token.hpp"

namespace testutil {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::string strip(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline quicshare::IpAddress ip(const std::string& text) {
  auto parsed = quicshare::IpAddress::parse(text);
  if (!parsed) throw std::runtime_error("bad test ip: " + text);
  return *parsed;
}

inline quicshare::token::GroupSecret secret_from_byte(std::uint8_t fill) {
  quicshare::token::GroupSecret secret;
  secret.key.fill(fill);
  return secret;
}

}  // namespace testutil
