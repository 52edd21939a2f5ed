#pragma once

#include <chrono>
#include <stdexcept>
#include <string>

namespace dreammem {

/// Backend did not answer in time or could not be reached. Retryable.
class BackendTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Backend answered with an error. Not retryable; carries the backend message.
class BackendRejection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HttpEndpoint {
  std::string origin;  // "http://host:port"
  std::string path;    // "/generate"
};

HttpEndpoint parse_http_url(const std::string& url);

/// POSTs a JSON body and returns the JSON reply body of a 200 response.
///
/// Transport failures and 408/429/502/503/504 raise BackendTimeout; any other
/// non-200 status raises BackendRejection with the reply's "error" field.
std::string post_json(const HttpEndpoint& endpoint, const std::string& body,
                      std::chrono::milliseconds timeout);

}  // namespace dreammem
