#pragma once

#include <cstdio>
#include <string>

namespace mmf {

// 17 significant digits make the decimal form reparse to the identical bits.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace mmf
