#pragma once

#include <httplib.h>

#include "uf/service.hpp"

namespace uf {

/// Routes every request on `server` through `service`, with permissive CORS.
void mount_service(httplib::Server& server, const ApiService& service);

}  // namespace uf
