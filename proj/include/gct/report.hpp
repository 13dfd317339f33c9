#pragma once

// Human-readable run summary built from the evaluation summary JSON.

#include <string>

#include "gct/gctf.hpp"

namespace gct {

struct Report {
  std::string text;
  std::string driving_csv;   ///< selected story, one row per target
  std::string stories_csv;   ///< one row per evaluated story
  std::string versions_csv;  ///< stories grouped by prompt version
  std::string plot;          ///< text bar chart of the selected story's scores
};

/// `summary` layout: {selected, stories: [{candidate, story_id,
/// prompt_version, prevalidation, driving, explanations}], recovery,
/// explained, failed}. Missing optional parts are left out of the text.
Report build_report(const Json& summary);

/// Bar chart with one row per label; bars scale to the largest |value|.
std::string text_bars(const std::vector<std::string>& labels, const std::vector<double>& values, int width = 40);

}  // namespace gct
