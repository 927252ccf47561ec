#include "gasrotor/digest.hpp"

#include <openssl/evp.h>

#include "gasrotor/error.hpp"

namespace gasrotor {

Sha256 sha256(std::string_view bytes) {
  Sha256 out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
    throw Error(errc::io_error, "SHA-256 computation failed");
  return out;
}

std::string to_hex(const Sha256& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : digest) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xF]);
  }
  return s;
}

}  // namespace gasrotor
