#pragma once

#include <string>

#include "octasam/service.hpp"

namespace httplib {
class Server;
}

namespace octasam::service {

/// Registers the REST routes (with permissive CORS headers) on `server`:
///   POST /sessions                 multipart: image, task, mode        -> {id}
///   POST /sessions/{id}/segment    {points:[{x,y,polarity}], mode}     -> {rle,h,w,confidence,ms,points}
///   POST /sessions/{id}/undo                                           -> {rle,h,w,confidence,points,noop}
///   GET  /sessions/{id}                                                -> session state
///   DELETE /sessions/{id}
///   GET  /healthz, GET /model
void mount(InferenceService& service, httplib::Server& server);

/// Blocks serving on host:port until the server is stopped.
void serve(InferenceService& service, const std::string& host, int port);

/// JSON used on the wire for a mask state.
std::string state_json(const MaskState& state, int height, int width);

}  // namespace octasam::service
