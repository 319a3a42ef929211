#pragma once

#include <iosfwd>

namespace eftr {

// Runs the invariant suite, one PASS/FAIL line per check. Returns the number of failures.
int run_selfcheck(std::ostream& out);

}  // namespace eftr
