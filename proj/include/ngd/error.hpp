#pragma once

#include <stdexcept>
#include <string>

namespace ngd {

/// Domain error raised by every module. The CLI maps it to exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A count could not be obtained from a provider.
class ProviderError : public Error {
 public:
  using Error::Error;
};

class QuotaExceeded : public ProviderError {
 public:
  QuotaExceeded() : ProviderError("daily quota exceeded") {}
};

/// The remote endpoint answered with something that is not `{"count": <int>}`.
class RemoteResponseError : public ProviderError {
 public:
  RemoteResponseError(const std::string& what, std::string payload)
      : ProviderError(what), payload_(std::move(payload)) {}

  const std::string& payload() const noexcept { return payload_; }

 private:
  std::string payload_;
};

/// Every training example maps to the same feature vector.
class DegenerateFeatures : public Error {
 public:
  DegenerateFeatures() : Error("degenerate features") {}
};

}  // namespace ngd
