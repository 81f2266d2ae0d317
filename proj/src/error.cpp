#include "mnode/error.hpp"

#include <atomic>
#include <iostream>

namespace mnode {

namespace {
std::atomic<bool> g_warnings{true};
}

void warn(const std::string& message) {
  if (g_warnings.load()) std::cerr << "mnode: warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }

}  // namespace mnode
