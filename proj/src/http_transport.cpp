// Copyright 2026 The pcosdx Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "httplib.h"

#include "pcosdx/errors.hpp"
#include "pcosdx/http_transport.hpp"

namespace pcosdx {
namespace {

std::atomic<std::size_t> g_egress{0};

}  // namespace

std::size_t egress_count() { return g_egress.load(); }

HttpResponse HttplibTransport::post(const HttpRequest& request) {
  g_egress.fetch_add(1);
  const auto scheme_end = request.url.find("://");
  if (scheme_end == std::string::npos) throw BackendError("bad url: " + request.url);
  const auto path_start = request.url.find('/', scheme_end + 3);
  const std::string origin =
      path_start == std::string::npos ? request.url : request.url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : request.url.substr(path_start);

  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout).count();
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  client.set_write_timeout(secs);
  httplib::Headers headers;
  std::string content_type = "application/json";
  for (const auto& [k, v] : request.headers) {
    if (k == "Content-Type") {
      content_type = v;
    } else {
      headers.emplace(k, v);
    }
  }
  auto res = client.Post(path, headers, request.body, content_type);
  if (!res) {
    throw BackendError("transport error posting to " + origin + ": " +
                       httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

}  // namespace pcosdx
