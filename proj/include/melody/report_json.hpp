#pragma once

#include "json.hpp"
#include "melody/metrics.hpp"

namespace melody {

// {"id", "oa", "rpa", "vr", "vfa", "frames", "voiced_ref", "unvoiced_ref"},
// metric values rounded to six decimals.
nlohmann::json report_json(const EvalReport& report);

}  // namespace melody
