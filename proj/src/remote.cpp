#include "uavvln/remote.hpp"

#include <regex>

#include "httplib.h"

#include "uavvln/errors.hpp"

namespace uavvln::remote {

Endpoint parse_endpoint(const std::string& url, std::chrono::milliseconds timeout) {
    static const std::regex kUrl(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, kUrl)) throw ConfigError("unsupported endpoint url '" + url + "'");
    Endpoint e;
    e.host = m[1];
    e.port = m[2].matched ? std::stoi(m[2]) : 80;
    e.path = m[3].matched ? std::string(m[3]) : "/";
    e.timeout = timeout;
    return e;
}

nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body) {
    httplib::Client client(endpoint.host, endpoint.port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(endpoint.path, body.dump(), "application/json");
    if (!res)
        throw BackendUnavailable("backend " + endpoint.host + ":" + std::to_string(endpoint.port) +
                                 " unavailable: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw BackendUnavailable("backend returned HTTP " + std::to_string(res->status));
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation(std::string("backend reply is not JSON: ") + e.what());
    }
}

} // namespace uavvln::remote
