#include "nvsnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace fs = std::filesystem;

namespace nvsnn::synth {

namespace {

// 5x7 glyph bitmaps for '0'..'9', one byte per row, low 5 bits used.
constexpr std::uint8_t kGlyphs[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

struct CoverageSim {
    std::size_t w, h;
    std::vector<std::uint8_t> prev, cur;
    std::vector<io::Event> events;

    CoverageSim(std::size_t width, std::size_t height)
        : w(width), h(height), prev(width * height, 0), cur(width * height, 0) {}

    void set(int x, int y) {
        if (x < 0 || y < 0 || x >= static_cast<int>(w) || y >= static_cast<int>(h)) return;
        cur[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = 1;
    }

    // compare against the previous millisecond and emit events
    void emit(std::uint64_t ms, Rng& rng, double edge_prob, double refresh_prob) {
        for (std::size_t i = 0; i < cur.size(); ++i) {
            const bool now = cur[i], before = prev[i];
            std::uint8_t pol = 2;  // 2 = no event
            if (now && !before && rng.next_double() < edge_prob) pol = 1;        // On
            else if (!now && before && rng.next_double() < edge_prob) pol = 0;   // Off
            else if (now && before && rng.next_double() < refresh_prob)
                pol = static_cast<std::uint8_t>(rng.next_below(2));
            if (pol <= 1) {
                io::Event e;
                e.x = static_cast<std::uint16_t>(i % w);
                e.y = static_cast<std::uint16_t>(i / w);
                e.polarity = pol;
                e.t_us = ms * 1000 + rng.next_below(1000);
                events.push_back(e);
            }
        }
        std::swap(prev, cur);
        std::fill(cur.begin(), cur.end(), 0);
    }

    std::vector<io::Event> finish() {
        std::sort(events.begin(), events.end(),
                  [](const io::Event& a, const io::Event& b) { return a.t_us < b.t_us; });
        return std::move(events);
    }
};

}  // namespace

io::EventStream make_digit_stream(int cls, Rng& rng, const DigitsParams& p) {
    require(cls >= 0 && cls < static_cast<int>(kDigitsClasses), Errc::config,
            "digit class out of range");
    constexpr std::size_t kSensor = 34;
    constexpr int kScale = 3;  // glyph renders as 15x21

    const double base_x = 9.0 + rng.uniform(-p.jitter_px, p.jitter_px);
    const double base_y = 6.0 + rng.uniform(-p.jitter_px, p.jitter_px);
    const std::uint64_t total_ms = p.duration_us / 1000;
    const std::uint64_t leg = std::max<std::uint64_t>(105, total_ms / 3);
    const std::uint64_t phase_salt = rng.next_u64();

    std::vector<io::Event> events;
    std::vector<std::uint8_t> prev(kSensor * kSensor, 0), cur(kSensor * kSensor, 0);
    for (std::uint64_t ms = 0; ms < total_ms; ++ms) {
        // saccade-like legs: the glyph re-seats by one pixel at each leg
        // boundary and holds still in between, so slices within a leg are
        // near-identical (converted recordings carry little motion)
        const std::uint64_t leg_idx = std::min<std::uint64_t>(ms / leg, 2);
        const int ox = static_cast<int>(std::lround(base_x)) + static_cast<int>(leg_idx);
        const int oy = static_cast<int>(std::lround(base_y)) + (leg_idx == 1 ? -1 : leg_idx == 2 ? 1 : 0);

        std::fill(cur.begin(), cur.end(), 0);
        for (int gy = 0; gy < 7; ++gy)
            for (int gx = 0; gx < 5; ++gx)
                if (kGlyphs[cls][gy] & (1 << (4 - gx)))
                    for (int sy = 0; sy < kScale; ++sy)
                        for (int sx = 0; sx < kScale; ++sx) {
                            const int x = ox + gx * kScale + sx, y = oy + gy * kScale + sy;
                            if (x >= 0 && y >= 0 && x < int(kSensor) && y < int(kSensor))
                                cur[std::size_t(y) * kSensor + std::size_t(x)] = 1;
                        }

        for (std::size_t i = 0; i < cur.size(); ++i) {
            const std::uint16_t x = static_cast<std::uint16_t>(i % kSensor);
            const std::uint16_t y = static_cast<std::uint16_t>(i / kSensor);
            const std::uint64_t px_hash = fnv1a(&i, sizeof i, phase_salt);
            auto push = [&](std::uint8_t pol) {
                events.push_back({x, y, pol, ms * 1000 + rng.next_below(1000)});
            };
            if (cur[i] && !prev[i] && rng.next_double() < p.edge_event_prob) {
                push(1);  // newly covered: On
            } else if (!cur[i] && prev[i] && rng.next_double() < p.edge_event_prob) {
                push(0);  // uncovered: Off
            } else if (cur[i]) {
                // periodic per-pixel re-fire with a fixed phase and polarity:
                // every refresh_period window contains the pixel exactly once
                if ((ms + px_hash) % p.refresh_period_ms == 0 &&
                    rng.next_double() >= p.dropout_prob)
                    push(static_cast<std::uint8_t>((px_hash >> 7) & 1));
                if (rng.next_double() < p.chatter_prob)
                    push(static_cast<std::uint8_t>(rng.next_below(2)));
            }
        }
        // background noise: events at uniform random pixels
        const std::size_t n_noise = static_cast<std::size_t>(p.noise_events_per_ms);
        const double frac = p.noise_events_per_ms - static_cast<double>(n_noise);
        for (std::size_t j = 0; j < n_noise + (rng.next_double() < frac ? 1 : 0); ++j)
            events.push_back({static_cast<std::uint16_t>(rng.next_below(kSensor)),
                              static_cast<std::uint16_t>(rng.next_below(kSensor)),
                              static_cast<std::uint8_t>(rng.next_below(2)),
                              ms * 1000 + rng.next_below(1000)});
        std::swap(prev, cur);
    }

    std::sort(events.begin(), events.end(),
              [](const io::Event& a, const io::Event& b) { return a.t_us < b.t_us; });
    io::EventStream s;
    s.sensor_width = kSensor;
    s.sensor_height = kSensor;
    s.label = cls;
    s.events = std::move(events);
    return s;
}

io::EventStream make_gesture_stream(int cls, Rng& rng, const GestureParams& p) {
    require(cls >= 0 && cls < static_cast<int>(kGestureClasses), Errc::config,
            "gesture class out of range");
    constexpr std::size_t kSensor = 128;
    const std::uint64_t total_ms = p.duration_us / 1000;

    // static torso plus a class-specific moving blob trajectory
    const double cx0 = 64.0 + rng.uniform(-5.0, 5.0);
    const double cy0 = 56.0 + rng.uniform(-5.0, 5.0);
    const double phase = rng.uniform(0.0, 6.283185307179586);

    CoverageSim sim(kSensor, kSensor);
    for (std::uint64_t ms = 0; ms < total_ms; ++ms) {
        const double t = static_cast<double>(ms) / 1000.0 * p.speed;  // seconds
        double bx = cx0, by = cy0;
        const double w = 6.283185307179586;
        switch (cls) {
            case 0: bx += 40 * std::sin(w * t + phase); by -= 30; break;
            case 1: bx -= 35; by += 35 * std::sin(w * t + phase); break;
            case 2: bx += 32 * std::cos(w * t + phase); by += 32 * std::sin(w * t + phase); break;
            case 3: bx += 32 * std::cos(-w * t + phase); by += 32 * std::sin(-w * t + phase); break;
            case 4: bx += 38 * std::sin(w * t + phase); by += 38 * std::sin(2 * w * t + phase); break;
            case 5: bx += 40 * std::sin(w * 1.5 * t + phase); by += 30; break;
            case 6: bx += 35; by += 35 * std::sin(w * 1.5 * t + phase); break;
            case 7: bx += 45 * std::cos(0.5 * w * t + phase); by += 45 * std::sin(0.5 * w * t + phase); break;
            case 8: bx += 30 * std::sin(w * t + phase); by += 30 * std::sin(w * t + phase) * std::cos(w * t + phase); break;
            case 9: bx += 18 * std::cos(2 * w * t + phase); by += 18 * std::sin(2 * w * t + phase); break;
            default: bx += 40 * ((std::fmod(2.0 * t, 2.0) < 1.0) ? 2.0 * std::fmod(2.0 * t, 1.0) - 1.0
                                                                 : 1.0 - 2.0 * std::fmod(2.0 * t, 1.0));
                     by -= 20; break;
        }

        // torso block (static coverage, chatter only)
        for (int y = 80; y < 120; ++y)
            for (int x = 52; x < 76; ++x) sim.set(x, y);
        // two moving blobs (the mirrored one trails at opposite phase)
        const int r = static_cast<int>(std::ceil(p.blob_radius));
        const double bx2 = 2.0 * cx0 - bx, by2 = by - 14.0;
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
                if (dx * dx + dy * dy <= p.blob_radius * p.blob_radius) {
                    sim.set(static_cast<int>(std::lround(bx)) + dx,
                            static_cast<int>(std::lround(by)) + dy);
                    sim.set(static_cast<int>(std::lround(bx2)) + dx,
                            static_cast<int>(std::lround(by2)) + dy);
                }
        sim.emit(ms, rng, p.edge_event_prob, p.refresh_event_prob);
    }

    io::EventStream s;
    s.sensor_width = kSensor;
    s.sensor_height = kSensor;
    s.label = cls;
    s.events = sim.finish();
    return s;
}

data::EventDataset make_digits_dataset(std::size_t n, std::uint64_t seed, const DigitsParams& p) {
    data::EventDataset ds;
    Rng rng(seed);
    ds.streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng sample_rng = rng.split(i + 1);
        ds.streams.push_back(make_digit_stream(static_cast<int>(i % kDigitsClasses), sample_rng, p));
    }
    return ds;
}

data::EventDataset make_gesture_dataset(std::size_t n, std::uint64_t seed, const GestureParams& p) {
    data::EventDataset ds;
    Rng rng(seed);
    ds.streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng sample_rng = rng.split(i + 1);
        ds.streams.push_back(make_gesture_stream(static_cast<int>(i % kGestureClasses), sample_rng, p));
    }
    return ds;
}

void write_digits_dataset(const std::string& dir, std::size_t n_train, std::size_t n_test,
                          std::uint64_t seed, const DigitsParams& p) {
    Rng rng(seed);
    const auto write_split = [&](const std::string& split, std::size_t n, std::uint64_t salt) {
        for (std::size_t i = 0; i < n; ++i) {
            const int cls = static_cast<int>(i % kDigitsClasses);
            Rng sample_rng = rng.split(salt * 1000003 + i);
            const io::EventStream s = make_digit_stream(cls, sample_rng, p);
            const std::string d = dir + "/" + split + "/" + std::to_string(cls);
            fs::create_directories(d);
            char name[32];
            std::snprintf(name, sizeof name, "%05zu.bin", i);
            write_file(d + "/" + name, io::write_nmnist_bytes(s));
        }
    };
    write_split("train", n_train, 1);
    write_split("test", n_test, 2);
}

void write_gesture_dataset(const std::string& dir, std::size_t n_train, std::size_t n_test,
                           std::uint64_t seed, const GestureParams& p) {
    Rng rng(seed);
    const auto write_split = [&](const std::string& split, std::size_t n, std::uint64_t salt) {
        fs::create_directories(dir + "/" + split);
        for (std::size_t i = 0; i < n; ++i) {
            const int cls = static_cast<int>(i % kGestureClasses);
            Rng sample_rng = rng.split(salt * 1000003 + i);
            const io::EventStream s = make_gesture_stream(cls, sample_rng, p);
            char name[32];
            std::snprintf(name, sizeof name, "%05zu", i);
            write_file(dir + "/" + split + "/" + name + ".aedat", io::write_aedat31(s.events));
            const std::string csv = "class,startTime_usec,endTime_usec\n" + std::to_string(cls + 1) +
                                    ",0," + std::to_string(p.duration_us) + "\n";
            write_text_file(dir + "/" + split + "/" + name + "_labels.csv", csv);
        }
    };
    write_split("train", n_train, 1);
    write_split("test", n_test, 2);
}

}  // namespace nvsnn::synth
