#include <cstdio>

#include "kmsheat/acceptance.hpp"

int main() {
  int failures = 0;
  for (const auto& r : kmsheat::acceptance::run_all()) {
    std::printf("%s [%.2f s, limit %.0f s]\n", kmsheat::acceptance::summary_line(r).c_str(), r.seconds, r.time_limit);
    std::fflush(stdout);
    if (!r.pass) ++failures;
  }
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
