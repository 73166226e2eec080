#pragma once

#include "nvsnn/dataset.hpp"

// Synthetic event-stream generators for CI and offline testing. Two families
// mirror the two kinds of neuromorphic vision data: a converted-style source
// (static glyph swept by saccade-like micro-motion on a 34x34 sensor) and a
// captured-style source (large free motion on a 128x128 sensor). Both are
// written out in the real container formats so the whole parse -> collapse ->
// train pipeline runs unchanged.

namespace nvsnn::synth {

struct DigitsParams {
    std::uint64_t duration_us = 315000;
    double edge_event_prob = 0.95;     // event per boundary-crossing pixel per ms
    std::uint32_t refresh_period_ms = 3;  // covered pixels re-fire on a per-pixel phase
    double dropout_prob = 0.05;        // a periodic event occasionally goes missing
    double chatter_prob = 0.02;        // random-polarity sensor noise per covered pixel per ms
    double noise_events_per_ms = 8.0;  // background events at uniform random pixels
    int jitter_px = 6;                 // per-sample placement jitter
};

struct GestureParams {
    std::uint64_t duration_us = 1500000;
    double speed = 1.0;               // trajectory angular/linear speed scale
    double blob_radius = 15.0;
    double edge_event_prob = 0.6;
    double refresh_event_prob = 0.03;
};

inline constexpr std::size_t kDigitsClasses = 10;
inline constexpr std::size_t kGestureClasses = 11;

io::EventStream make_digit_stream(int cls, Rng& rng, const DigitsParams& p);
io::EventStream make_gesture_stream(int cls, Rng& rng, const GestureParams& p);

data::EventDataset make_digits_dataset(std::size_t n, std::uint64_t seed, const DigitsParams& p);
data::EventDataset make_gesture_dataset(std::size_t n, std::uint64_t seed, const GestureParams& p);

// Real-container dataset layouts:
//   digits:  <dir>/{train,test}/<digit>/<i>.bin      (5-byte records)
//   gesture: <dir>/{train,test}/<i>.aedat + <i>_labels.csv
void write_digits_dataset(const std::string& dir, std::size_t n_train, std::size_t n_test,
                          std::uint64_t seed, const DigitsParams& p);
void write_gesture_dataset(const std::string& dir, std::size_t n_train, std::size_t n_test,
                           std::uint64_t seed, const GestureParams& p);

}  // namespace nvsnn::synth
