#pragma once

#include "fieldalign/review.hpp"

namespace httplib {
class Server;
}

namespace fieldalign::review {

/// Registers the /v1 routes of the review API on `server`, backed by `store`.
///
///   POST /v1/sessions                         multipart: ds1, ds2 files + config fields
///   GET  /v1/sessions
///   GET  /v1/sessions/{id}
///   GET  /v1/sessions/{id}/candidates
///   POST /v1/sessions/{id}/decisions          {"row", "action", "col"}
///   GET  /v1/sessions/{id}/suggestion
///   GET  /v1/sessions/{id}/export?format=csv|structured
void install_routes(httplib::Server& server, SessionStore& store);

/// HTTP status for a library error.
int http_status(ErrorKind kind) noexcept;

}  // namespace fieldalign::review
