#include "dreammem/http.hpp"

#include "httplib.h"
#include "json.hpp"

namespace dreammem {

HttpEndpoint parse_http_url(const std::string& url) {
  constexpr std::string_view kScheme = "http://";
  if (url.rfind(kScheme, 0) != 0)
    throw std::invalid_argument("backend url must start with http://: " + url);
  const std::size_t slash = url.find('/', kScheme.size());
  HttpEndpoint ep;
  ep.origin = url.substr(0, slash);
  ep.path = slash == std::string::npos ? "/" : url.substr(slash);
  if (ep.origin.size() == kScheme.size()) throw std::invalid_argument("backend url has no host");
  return ep;
}

std::string post_json(const HttpEndpoint& endpoint, const std::string& body,
                      std::chrono::milliseconds timeout) {
  httplib::Client client(endpoint.origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  auto res = client.Post(endpoint.path, body, "application/json");
  if (!res)
    throw BackendTimeout(endpoint.origin + endpoint.path + ": " + httplib::to_string(res.error()));
  const int status = res->status;
  if (status == 200) return res->body;

  std::string message = "HTTP " + std::to_string(status);
  const auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_object() && reply.contains("error") && reply["error"].is_string())
    message += ": " + reply["error"].get<std::string>();
  if (status == 408 || status == 429 || status == 502 || status == 503 || status == 504)
    throw BackendTimeout(message);
  throw BackendRejection(message);
}

}  // namespace dreammem
