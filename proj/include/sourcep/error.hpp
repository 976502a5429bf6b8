#pragma once

#include <stdexcept>
#include <string>

namespace sourcep {

// Base for every domain error raised by the library. The CLI maps these to
// exit code 1; anything else escaping is a bug.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace sourcep
