#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace pmem {

// All recoverable failures (bad shapes, malformed files, invalid configs)
// throw Error. kind() is a stable machine-readable category; what() is for
// humans.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

namespace detail {
inline void cat_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void cat_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    cat_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string cat(const Args&... args) {
    std::ostringstream os;
    detail::cat_into(os, args...);
    return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const std::string& kind, const Args&... args) {
    throw Error(kind, cat(args...));
}

}  // namespace pmem
