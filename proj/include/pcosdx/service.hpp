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


#pragma once

// HTTP/JSON front end over an Engine and a SessionStore.

#include <memory>
#include <string>
#include <thread>

#include "pcosdx/engine.hpp"
#include "pcosdx/session_store.hpp"

namespace httplib {
class Server;
}

namespace pcosdx {

struct HttpReply {
  int status = 200;
  Json body;
};

class Service {
 public:
  Service(Engine& engine, SessionStore& store);
  ~Service();

  // Request handlers, callable without a socket.
  HttpReply diagnose(const std::string& body);
  HttpReply session(const std::string& session_id) const;
  HttpReply kg_query(const std::string& body) const;
  HttpReply health() const;

  // Binds and serves on a background thread. Port 0 picks a free port;
  // the bound port is returned.
  int start(const std::string& host, int port);
  // Blocks until stop() is called from another thread or a signal handler.
  void listen(const std::string& host, int port);
  void stop();

 private:
  void install_routes();

  Engine& engine_;
  SessionStore& store_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

// 32 hex characters from the OpenSSL CSPRNG.
std::string random_session_id();

}  // namespace pcosdx
