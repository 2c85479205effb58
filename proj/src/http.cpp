#include "octasam/http.hpp"

#include <httplib.h>
#include <json.hpp>

#include "octasam/log.hpp"

namespace octasam::service {

using nlohmann::json;

namespace {

json points_json(const std::vector<promptgen::PromptPoint>& points) {
    json a = json::array();
    for (const auto& p : points) a.push_back({{"x", p.x}, {"y", p.y}, {"polarity", p.polarity}});
    return a;
}

json state_object(const MaskState& state, int height, int width) {
    json j = {{"h", height}, {"w", width}, {"points", points_json(state.points)}};
    if (state.mask) {
        j["rle"] = state.mask->runs;
        j["confidence"] = state.confidence;
    } else {
        j["rle"] = nullptr;
        j["confidence"] = nullptr;
    }
    return j;
}

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    send(res, status, {{"error", kind}, {"message", message}});
}

/// Maps library exceptions onto HTTP status codes.
template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const NotFound& e) {
        send_error(res, 404, "not_found", e.what());
    } catch (const Busy& e) {
        res.set_header("Retry-After", "1");
        send_error(res, 503, "busy", e.what());
    } catch (const ParseError& e) {
        send_error(res, 400, "parse_error", e.what());
    } catch (const ConfigError& e) {
        send_error(res, 400, "bad_request", e.what());
    } catch (const DataError& e) {
        send_error(res, 400, "bad_request", e.what());
    } catch (const ShapeError& e) {
        send_error(res, 400, "bad_request", e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, "bad_request", std::string("malformed JSON body: ") + e.what());
    } catch (const std::exception& e) {
        log::error(std::string("request failed: ") + e.what());
        send_error(res, 500, "internal", e.what());
    }
}

std::vector<promptgen::PromptPoint> parse_points(const json& body) {
    std::vector<promptgen::PromptPoint> out;
    if (!body.contains("points")) return out;
    const auto& arr = body.at("points");
    if (!arr.is_array()) throw DataError("points must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& p = arr[i];
        if (!p.is_object() || !p.contains("x") || !p.contains("y"))
            throw DataError("point " + std::to_string(i) + " needs integer x and y");
        if (!p.at("x").is_number_integer() || !p.at("y").is_number_integer())
            throw DataError("point " + std::to_string(i) + " has non-integer coordinates");
        out.push_back({p.at("x").get<int>(), p.at("y").get<int>(), p.value("polarity", 1)});
    }
    return out;
}

}  // namespace

std::string state_json(const MaskState& state, int height, int width) { return state_object(state, height, width).dump(); }

void mount(InferenceService& service, httplib::Server& server) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { send(res, 200, {{"status", "ok"}}); });

    server.Get("/model", [&service](const httplib::Request&, httplib::Response& res) {
        const auto& m = service.model_info();
        send(res, 200, {{"variant", m.variant}, {"rank", m.rank}, {"task", m.task}, {"checkpoint_hash", m.checkpoint_hash}});
    });

    server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (!req.is_multipart_form_data() || !req.has_file("image"))
                throw DataError("expected a multipart upload with an 'image' part");
            const auto field = [&](const char* key) { return req.has_file(key) ? req.get_file_value(key).content : std::string(); };
            const auto id = service.create_session(req.get_file_value("image").content, field("task"), field("mode"));
            send(res, 201, {{"id", id}});
        });
    });

    server.Get(R"(/sessions/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto v = service.view(req.matches[1]);
            json j = state_object(v.state, v.height, v.width);
            j["id"] = v.id;
            j["task"] = to_string(v.task);
            j["mode"] = promptgen::to_string(v.mode);
            j["history"] = v.history;
            send(res, 200, j);
        });
    });

    server.Delete(R"(/sessions/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (!service.remove(req.matches[1])) throw NotFound("unknown session " + std::string(req.matches[1]));
            send(res, 200, {{"deleted", std::string(req.matches[1])}});
        });
    });

    server.Post(R"(/sessions/([^/]+)/segment)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = req.body.empty() ? json::object() : json::parse(req.body);
            std::optional<promptgen::Mode> mode;
            if (body.contains("mode")) mode = promptgen::parse_mode(body.at("mode").get<std::string>());
            const auto id = std::string(req.matches[1]);
            const auto r = service.segment(id, parse_points(body), mode);
            const auto v = service.view(id);
            json j = state_object(r.state, v.height, v.width);
            j["ms"] = r.ms;
            send(res, 200, j);
        });
    });

    server.Post(R"(/sessions/([^/]+)/undo)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto id = std::string(req.matches[1]);
            const auto r = service.undo(id);
            const auto v = service.view(id);
            json j = state_object(r.state, v.height, v.width);
            j["noop"] = r.noop;
            send(res, 200, j);
        });
    });
}

void serve(InferenceService& service, const std::string& host, int port) {
    httplib::Server server;
    mount(service, server);
    log::info("listening on " + host + ":" + std::to_string(port));
    if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace octasam::service
