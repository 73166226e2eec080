#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nvsnn/tensor.hpp"

namespace nvsnn::io {

// One DVS spike event. polarity: 0 = Off (intensity decrease), 1 = On.
struct Event {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::uint8_t polarity = 0;
    std::uint64_t t_us = 0;
};

// A parsed recording: events in non-decreasing time order plus sensor geometry.
struct EventStream {
    std::vector<Event> events;
    std::uint16_t sensor_width = 0;
    std::uint16_t sensor_height = 0;
    std::int32_t label = -1;  // -1 = unlabeled

    void validate() const;
};

// Dense binary slice sequence [T, 2, H, W] produced by temporal collapse.
struct SliceSequence {
    Tensor<std::uint8_t> data;  // elements in {0,1}
    std::uint32_t dt_us = 1;
    std::int32_t label = -1;

    std::size_t T() const { return data.dim(0); }
    std::size_t channels() const { return data.dim(1); }
    std::size_t height() const { return data.dim(2); }
    std::size_t width() const { return data.dim(3); }
};

// ---- raw containers --------------------------------------------------------

// N-MNIST binary records: 5 bytes per event.
//   byte0 = x, byte1 = y, byte2 bit7 = polarity,
//   remaining 23 bits (byte2 bits 6..0, byte3, byte4, big-endian) = t in us.
// Sensor geometry is fixed at 34x34.
EventStream parse_nmnist(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_nmnist_bytes(const EventStream& stream);

// Labeled trial window from a gesture label CSV (class,startTime_usec,endTime_usec).
struct TrialWindow {
    std::int32_t cls = 0;  // 1-based in the file
    std::uint64_t start_us = 0;
    std::uint64_t end_us = 0;
};

std::vector<TrialWindow> parse_gesture_labels_csv(const std::string& csv_text);

// AEDAT 3.1 polarity-event container (the DVS Gesture distribution format).
// Returns the raw device-time event list; geometry is the caller's to set.
std::vector<Event> parse_aedat31(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_aedat31(const std::vector<Event>& events);

// Splits one gesture recording into per-trial EventStreams: events filtered to
// [start_us, end_us), timestamps rebased to the window start, label = class-1.
std::vector<EventStream> parse_gesture(const std::vector<std::uint8_t>& aedat_bytes,
                                       const std::string& labels_csv);

// ---- temporal collapse -----------------------------------------------------

// OR-collapse of the us-resolution raster into T slices of alpha_dt us each.
// An element is 1 iff at least one event falls into its window; events with
// t_us >= T*alpha_dt are dropped.
SliceSequence collapse(const EventStream& stream, std::uint32_t alpha_dt, std::uint32_t T);

// OR-group an already collapsed sequence by an integer factor (keeps only
// full groups). Grouping by beta after collapsing by alpha equals collapsing
// by alpha*beta over the covered range.
SliceSequence or_group(const SliceSequence& seq, std::uint32_t beta);

// Mean of all elements.
double spike_rate(const SliceSequence& seq);

// ---- NVSL slice cache ------------------------------------------------------
// magic "NVSL", u32 version=1, u32 T, C, H, W, dt_us, label (0xFFFFFFFF if
// absent), then T*C*H*W payload bytes each 0 or 1, t-major then c, y, x.

std::vector<std::uint8_t> save_slices(const SliceSequence& seq);
SliceSequence load_slices(const std::vector<std::uint8_t>& bytes);

void save_slices_file(const SliceSequence& seq, const std::string& path);
SliceSequence load_slices_file(const std::string& path);

// NVSF: same header layout with real-valued payload (little-endian f32),
// used for exported feature maps.
std::vector<std::uint8_t> save_float_slices(const Tensor<float>& data, std::uint32_t dt_us,
                                            std::int32_t label);
Tensor<float> load_float_slices(const std::vector<std::uint8_t>& bytes);

}  // namespace nvsnn::io
