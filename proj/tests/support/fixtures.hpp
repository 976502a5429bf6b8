#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace sourcep::testing {

inline std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(SOURCEP_FIXTURE_DIR) + "/" + name, std::ios::binary);
  if (!in) throw std::runtime_error("missing fixture " + name);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace sourcep::testing
