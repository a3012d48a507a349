#pragma once

#include "lfvit/report.hpp"

namespace lfvit {

struct SelftestResult {
    int passed = 0;
    int failed = 0;
    Json report;  // {"passed", "failed", "checks": [{"name","ok","detail"}...]}
};

// Runs the embedded invariant suite (kernel equivalence, FLOPs model anchors,
// loss identities, partition arithmetic, recurrence endpoints, a tiny
// end-to-end pass). Pure in-memory; no files touched.
SelftestResult run_selftest();

}  // namespace lfvit
