#include "forge/hash.hpp"

#include <openssl/evp.h>
#include <openssl/ripemd.h>

#include <stdexcept>

namespace forge {

Hash256 sha256(ByteView data) {
  Sha256Stream s;
  s.update(data);
  return s.finish();
}

Hash256 double_sha256(ByteView data) {
  Hash256 first = sha256(data);
  return sha256(first);
}

Hash160 hash160(ByteView data) {
  Hash256 inner = sha256(data);
  Hash160 out{};
  // The EVP route needs the legacy provider on OpenSSL 3.0.x.
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wdeprecated-declarations"
  RIPEMD160(inner.data(), inner.size(), out.data());
#pragma GCC diagnostic pop
  return out;
}

Sha256Stream::Sha256Stream() : ctx_(EVP_MD_CTX_new()) {
  if (ctx_ == nullptr || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 init failed");
  }
}

Sha256Stream::~Sha256Stream() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

void Sha256Stream::update(ByteView data) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size());
}

Hash256 Sha256Stream::finish() {
  Hash256 out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.data(), &len);
  return out;
}

}  // namespace forge
