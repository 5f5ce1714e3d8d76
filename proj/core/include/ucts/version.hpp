#pragma once

#define UCTS_VERSION_STRING "0.1.0"

namespace ucts {

inline const char* version() { return UCTS_VERSION_STRING; }

}  // namespace ucts
