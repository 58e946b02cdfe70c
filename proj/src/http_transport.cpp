// The only library translation unit that includes cpp-httplib.
#include <httplib.h>

#include <chrono>

#include "concord/backend.hpp"
#include "concord/error.hpp"

namespace concord {

namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw TransportError("invalid url: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

Transport http_transport() {
  return [](const HttpRequest& request) -> HttpResponse {
    const auto [base, path] = split_url(request.url);
    httplib::Client client(base);
    const auto seconds = request.timeout_ms / 1000;
    const auto micros = (request.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [name, value] : request.headers) {
      if (name == "Content-Type") {
        content_type = value;
      } else {
        headers.emplace(name, value);
      }
    }
    const auto started = std::chrono::steady_clock::now();
    auto result = client.Post(path, headers, request.body, content_type);
    if (!result) {
      const auto elapsed =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
      if (result.error() == httplib::Error::ConnectionTimeout || elapsed >= request.timeout_ms) {
        throw Timeout(request.url + " after " + std::to_string(elapsed) + " ms");
      }
      throw TransportError(request.url + ": " + httplib::to_string(result.error()));
    }
    return {result->status, result->body};
  };
}

}  // namespace concord
