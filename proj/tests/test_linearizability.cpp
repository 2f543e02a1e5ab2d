#include <catch2/catch_amalgamated.hpp>

#include "support/history_gen.hpp"
#include "support/linearizability.hpp"

using namespace edgesim;
using namespace edgesim::testing;

namespace {

LinOp put(std::string key, std::string value, SimTime inv, SimTime res) {
  return {true, std::move(key), std::move(value), inv, res};
}

LinOp got(std::string key, std::string value, SimTime inv, SimTime res) {
  return {false, std::move(key), std::move(value), inv, res};
}

}  // namespace

TEST_CASE("checker accepts sequential and legal concurrent histories") {
  CHECK(linearizable({}));
  CHECK(linearizable({put("x", "a", 0, 10), got("x", "a", 20, 30)}));
  CHECK(linearizable({got("x", "", 0, 10), put("x", "a", 20, 30)}));
  // A read overlapping a write may see either the old or the new value.
  CHECK(linearizable({put("x", "a", 0, 100), got("x", "", 10, 20)}));
  CHECK(linearizable({put("x", "a", 0, 100), got("x", "a", 10, 20)}));
  // Two overlapping writes: later reads must agree on one winner, and the
  // order may differ per key.
  CHECK(linearizable({put("x", "a", 0, 100), put("x", "b", 10, 90),
                      got("x", "a", 200, 210), got("x", "a", 220, 230)}));
  CHECK(linearizable({put("x", "a", 0, 100), put("y", "b", 10, 90),
                      got("x", "a", 200, 210), got("y", "b", 200, 210)}));
}

TEST_CASE("checker rejects histories violating real-time or register order") {
  // Stale read after the write completed.
  CHECK_FALSE(linearizable({put("x", "a", 0, 10), got("x", "", 20, 30)}));
  // Value goes backwards: "a" observed after "b" was observed, with both
  // writes already complete.
  CHECK_FALSE(linearizable({put("x", "a", 0, 10), put("x", "b", 20, 30),
                            got("x", "b", 40, 50), got("x", "a", 60, 70)}));
  // A read returning a value never written.
  CHECK_FALSE(linearizable({put("x", "a", 0, 10), got("x", "z", 20, 30)}));
  // Split-brain: two sequential reads disagree on the winner of two
  // already-completed writes.
  CHECK_FALSE(linearizable({put("x", "a", 0, 100), put("x", "b", 10, 90),
                            got("x", "a", 200, 210), got("x", "b", 220, 230)}));
}

TEST_CASE("generated concurrent store histories are linearizable") {
  int ops_total = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto history = generate_history(seed);
    REQUIRE(!history.empty());
    for (const auto& op : history) {
      REQUIRE(op.respond > op.invoke);  // every operation completed
    }
    ops_total += int(history.size());
    INFO("seed " << seed);
    CHECK(linearizable(history));
  }
  CHECK(ops_total > 200 * 4 - 1);
}
