#include "eid/common.hpp"

#include <cstdlib>
#include <thread>

namespace eid {

int thread_budget() {
  if (const char* env = std::getenv("EID_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
    return 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

}  // namespace eid
