#pragma once

#include <vector>

#include "stsens/mat.hpp"
#include "stsens/panel.hpp"

namespace stsens {

struct WindowSpec {
    int past_len = 13;
    int horizon = 15;
    int stride = 1;
    int combined() const { return past_len + horizon; }
};

struct DateRange {
    Date start, end;
};

struct SplitSpec {
    DateRange train, validation, test;
    // disjoint and ordered train < validation < test
    void validate() const;
};

// The paper's primary split dates (test year corrected to follow validation
// contiguously, matching the pattern of the other three published splits).
SplitSpec primary_split();

// A window starts at index start_t of a county's series: past covers
// [start_t, start_t+past_len) and the prediction starts at
// start_t + past_len.
struct WindowRef {
    int county = 0;
    int start_t = 0;
};

// Every full window at unit stride; count is C * (T - combined + 1).
// Throws if T < combined.
std::vector<WindowRef> make_windows(const FeaturePanel& panel, const WindowSpec& spec);

struct SplitPanels {
    FeaturePanel train, validation, test;
};

// Sub-panels per split range. Each keeps past_len days of leading context
// and horizon-1 days of trailing room (clipped to the panel), so that the
// windows of a sub-panel are exactly those whose prediction start falls in
// the split's range.
SplitPanels split(const FeaturePanel& panel, const SplitSpec& spec, const WindowSpec& wspec);

// One window materialized for the model: rows are timesteps.
// Past columns are [targets | observed | known], future columns are the
// known features only.
struct WindowData {
    int county = 0;
    Date pred_start;
    Mat past;     // [past_len x (F_tgt + F_obs + F_known)]
    Mat future;   // [horizon x F_known]
    Mat statics;  // [1 x F_stat]
    Mat target;   // [horizon x F_tgt]
};

WindowData materialize(const FeaturePanel& panel, const WindowSpec& spec, WindowRef ref);

// Feature names in the column order used for past inputs.
std::vector<std::string> past_input_names(const FeaturePanel& panel);

}  // namespace stsens
