#pragma once

#include <chrono>
#include <string>

#include "json.hpp"

namespace uavvln::remote {

// HTTP JSON endpoint of an external backend (LLM decomposer, detector).
struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 80;
    std::string path = "/";
    std::chrono::milliseconds timeout{5000};
};

// Accepts "http://host:port/path"; throws ConfigError otherwise.
Endpoint parse_endpoint(const std::string& url,
                        std::chrono::milliseconds timeout = std::chrono::milliseconds{5000});

// POSTs `body` and returns the parsed JSON reply. Throws BackendUnavailable on
// transport failure or non-2xx status, SchemaViolation if the reply is not JSON.
nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body);

} // namespace uavvln::remote
