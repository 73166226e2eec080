#include "nvsnn/event_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace nvsnn {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Errc::missing_file, "cannot open " + path);
    in.seekg(0, std::ios::end);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    require(in.good() || buf.empty(), Errc::malformed_file, "short read on " + path);
    return buf;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Errc::missing_file, "cannot create " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), Errc::malformed_file, "short write on " + path);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Errc::missing_file, "cannot create " + path);
    out << text;
    require(out.good(), Errc::malformed_file, "short write on " + path);
}

}  // namespace nvsnn

namespace nvsnn::io {

namespace {
constexpr std::uint16_t kNmnistSize = 34;
constexpr std::uint16_t kGestureSize = 128;
constexpr std::uint32_t kNoLabel = 0xFFFFFFFFu;
}  // namespace

void EventStream::validate() const {
    std::uint64_t prev = 0;
    for (const Event& e : events) {
        require(e.x < sensor_width && e.y < sensor_height, Errc::geometry,
                "event outside sensor geometry");
        require(e.polarity <= 1, Errc::geometry, "polarity out of range");
        require(e.t_us >= prev, Errc::malformed_file, "timestamps not non-decreasing");
        prev = e.t_us;
    }
}

// ---- N-MNIST ----------------------------------------------------------------

EventStream parse_nmnist(const std::vector<std::uint8_t>& bytes) {
    require(bytes.size() % 5 == 0, Errc::malformed_file,
            "N-MNIST record length not a multiple of 5 bytes");
    EventStream s;
    s.sensor_width = kNmnistSize;
    s.sensor_height = kNmnistSize;
    s.events.reserve(bytes.size() / 5);
    for (std::size_t i = 0; i < bytes.size(); i += 5) {
        Event e;
        e.x = bytes[i];
        e.y = bytes[i + 1];
        e.polarity = static_cast<std::uint8_t>((bytes[i + 2] >> 7) & 1);
        e.t_us = (static_cast<std::uint64_t>(bytes[i + 2] & 0x7f) << 16) |
                 (static_cast<std::uint64_t>(bytes[i + 3]) << 8) |
                 static_cast<std::uint64_t>(bytes[i + 4]);
        require(e.x < kNmnistSize && e.y < kNmnistSize, Errc::geometry,
                "N-MNIST event outside 34x34 sensor");
        s.events.push_back(e);
    }
    return s;
}

std::vector<std::uint8_t> write_nmnist_bytes(const EventStream& stream) {
    std::vector<std::uint8_t> out;
    out.reserve(stream.events.size() * 5);
    for (const Event& e : stream.events) {
        require(e.t_us < (1ULL << 23), Errc::malformed_file, "timestamp exceeds 23-bit field");
        out.push_back(static_cast<std::uint8_t>(e.x));
        out.push_back(static_cast<std::uint8_t>(e.y));
        out.push_back(static_cast<std::uint8_t>(((e.polarity & 1) << 7) | ((e.t_us >> 16) & 0x7f)));
        out.push_back(static_cast<std::uint8_t>((e.t_us >> 8) & 0xff));
        out.push_back(static_cast<std::uint8_t>(e.t_us & 0xff));
    }
    return out;
}

// ---- gesture labels ----------------------------------------------------------

std::vector<TrialWindow> parse_gesture_labels_csv(const std::string& csv_text) {
    std::vector<TrialWindow> rows;
    std::istringstream in(csv_text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (!line.empty() && !std::isdigit(static_cast<unsigned char>(line[0]))) continue;  // header
        }
        TrialWindow w;
        unsigned long long cls = 0, start = 0, end = 0;
        if (std::sscanf(line.c_str(), "%llu,%llu,%llu", &cls, &start, &end) != 3)
            fail(Errc::label_file, "bad label row: " + line);
        w.cls = static_cast<std::int32_t>(cls);
        w.start_us = start;
        w.end_us = end;
        require(w.end_us >= w.start_us, Errc::label_file, "reversed trial window: " + line);
        rows.push_back(w);
    }
    // overlap check over the sorted windows
    std::vector<TrialWindow> sorted = rows;
    std::sort(sorted.begin(), sorted.end(),
              [](const TrialWindow& a, const TrialWindow& b) { return a.start_us < b.start_us; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        require(sorted[i].start_us >= sorted[i - 1].end_us, Errc::label_file,
                "overlapping trial windows in label file");
    return rows;
}

// ---- AEDAT 3.1 ----------------------------------------------------------------

std::vector<Event> parse_aedat31(const std::vector<std::uint8_t>& bytes) {
    // header lines all start with '#'; the first must announce AER-DAT3.1
    std::size_t pos = 0;
    std::string first_line;
    while (pos < bytes.size() && bytes[pos] != '\n') first_line.push_back(static_cast<char>(bytes[pos++]));
    if (pos < bytes.size()) ++pos;
    if (!first_line.empty() && first_line.back() == '\r') first_line.pop_back();
    require(first_line == "#!AER-DAT3.1", Errc::unsupported_format,
            "unsupported event container version: " + first_line);
    while (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        if (pos < bytes.size()) ++pos;
    }

    std::vector<Event> events;
    ByteReader r(bytes.data() + pos, bytes.size() - pos);
    while (r.remaining() > 0) {
        require(r.remaining() >= 28, Errc::truncated, "truncated AEDAT packet header");
        const std::int32_t event_type = static_cast<std::int16_t>(r.u32le() & 0xffff);  // type + source
        const std::uint32_t event_size = r.u32le();
        r.skip(4);  // timestamp field offset within an event
        const std::uint32_t ts_overflow = r.u32le();
        r.skip(4);  // capacity
        const std::uint32_t event_number = r.u32le();
        r.skip(4);  // valid count
        require(event_size > 0, Errc::malformed_file, "AEDAT packet with zero event size");
        const std::uint64_t payload = static_cast<std::uint64_t>(event_size) * event_number;
        require(r.remaining() >= payload, Errc::truncated, "truncated AEDAT packet payload");
        if (event_type != 1) {  // not a polarity packet
            r.skip(static_cast<std::size_t>(payload));
            continue;
        }
        require(event_size == 8, Errc::malformed_file, "unexpected polarity event size");
        for (std::uint32_t i = 0; i < event_number; ++i) {
            const std::uint32_t data = r.u32le();
            const std::uint32_t ts = r.u32le();
            if ((data & 1u) == 0) continue;  // invalidated event
            Event e;
            e.polarity = static_cast<std::uint8_t>((data >> 1) & 1u);
            e.y = static_cast<std::uint16_t>((data >> 2) & 0x7fffu);
            e.x = static_cast<std::uint16_t>((data >> 17) & 0x7fffu);
            e.t_us = (static_cast<std::uint64_t>(ts_overflow) << 31) | ts;
            events.push_back(e);
        }
    }
    return events;
}

std::vector<std::uint8_t> write_aedat31(const std::vector<Event>& events) {
    std::vector<std::uint8_t> out;
    const std::string header =
        "#!AER-DAT3.1\r\n"
        "#Format: RAW\r\n"
        "#Source 1: synthetic\r\n"
        "#!END-HEADER\r\n";
    out.insert(out.end(), header.begin(), header.end());

    const std::size_t chunk = 1024;
    for (std::size_t base = 0; base < events.size(); base += chunk) {
        const std::uint32_t n = static_cast<std::uint32_t>(std::min(chunk, events.size() - base));
        put_u32(out, 1u);              // eventType=1 (polarity), eventSource=0
        put_u32(out, 8u);              // eventSize
        put_u32(out, 4u);              // timestamp offset
        put_u32(out, 0u);              // ts overflow
        put_u32(out, n);               // capacity
        put_u32(out, n);               // number
        put_u32(out, n);               // valid
        for (std::uint32_t i = 0; i < n; ++i) {
            const Event& e = events[base + i];
            require(e.t_us < (1ULL << 31), Errc::malformed_file, "timestamp exceeds 31-bit field");
            const std::uint32_t data = 1u | (static_cast<std::uint32_t>(e.polarity & 1) << 1) |
                                       (static_cast<std::uint32_t>(e.y & 0x7fff) << 2) |
                                       (static_cast<std::uint32_t>(e.x & 0x7fff) << 17);
            put_u32(out, data);
            put_u32(out, static_cast<std::uint32_t>(e.t_us));
        }
    }
    return out;
}

std::vector<EventStream> parse_gesture(const std::vector<std::uint8_t>& aedat_bytes,
                                       const std::string& labels_csv) {
    const std::vector<TrialWindow> windows = parse_gesture_labels_csv(labels_csv);
    std::vector<Event> events = parse_aedat31(aedat_bytes);
    std::sort(events.begin(), events.end(),
              [](const Event& a, const Event& b) { return a.t_us < b.t_us; });

    std::vector<EventStream> trials;
    trials.reserve(windows.size());
    for (const TrialWindow& w : windows) {
        require(w.cls >= 1 && w.cls <= 11, Errc::label_file, "gesture class outside 1..11");
        EventStream s;
        s.sensor_width = kGestureSize;
        s.sensor_height = kGestureSize;
        s.label = w.cls - 1;
        const auto lo = std::lower_bound(events.begin(), events.end(), w.start_us,
                                         [](const Event& e, std::uint64_t t) { return e.t_us < t; });
        for (auto it = lo; it != events.end() && it->t_us < w.end_us; ++it) {
            Event e = *it;
            require(e.x < kGestureSize && e.y < kGestureSize, Errc::geometry,
                    "gesture event outside 128x128 sensor");
            e.t_us -= w.start_us;
            s.events.push_back(e);
        }
        trials.push_back(std::move(s));
    }
    return trials;
}

// ---- temporal collapse --------------------------------------------------------

SliceSequence collapse(const EventStream& stream, std::uint32_t alpha_dt, std::uint32_t T) {
    require(alpha_dt >= 1, Errc::config, "collapse: alpha_dt must be >= 1");
    require(T >= 1, Errc::config, "collapse: T must be >= 1");
    SliceSequence seq;
    seq.dt_us = alpha_dt;
    seq.label = stream.label;
    const std::size_t H = stream.sensor_height, W = stream.sensor_width;
    seq.data = Tensor<std::uint8_t>({T, 2, H, W});
    for (const Event& e : stream.events) {
        const std::uint64_t t = e.t_us / alpha_dt;
        if (t >= T) continue;  // only the first T slices are kept
        seq.data.data[((t * 2 + e.polarity) * H + e.y) * W + e.x] = 1;
    }
    return seq;
}

SliceSequence or_group(const SliceSequence& seq, std::uint32_t beta) {
    require(beta >= 1, Errc::config, "or_group: beta must be >= 1");
    const std::size_t T_out = seq.T() / beta;
    require(T_out >= 1, Errc::config, "or_group: sequence shorter than one group");
    SliceSequence out;
    out.dt_us = seq.dt_us * beta;
    out.label = seq.label;
    const std::size_t plane = seq.channels() * seq.height() * seq.width();
    out.data = Tensor<std::uint8_t>({T_out, seq.channels(), seq.height(), seq.width()});
    for (std::size_t t = 0; t < T_out; ++t) {
        std::uint8_t* dst = out.data.ptr() + t * plane;
        for (std::uint32_t g = 0; g < beta; ++g) {
            const std::uint8_t* src = seq.data.ptr() + (t * beta + g) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] |= src[i];
        }
    }
    return out;
}

double spike_rate(const SliceSequence& seq) {
    if (seq.data.numel() == 0) return 0.0;
    std::uint64_t ones = 0;
    for (std::uint8_t v : seq.data.data) ones += v;
    return static_cast<double>(ones) / static_cast<double>(seq.data.numel());
}

// ---- NVSL / NVSF ----------------------------------------------------------------

namespace {

std::vector<std::uint8_t> save_container(const char magic[4], const std::vector<std::size_t>& shape,
                                         std::uint32_t dt_us, std::int32_t label,
                                         const void* payload, std::size_t payload_bytes) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), magic, magic + 4);
    put_u32(out, 1u);  // version
    for (std::size_t d : shape) put_u32(out, static_cast<std::uint32_t>(d));
    put_u32(out, dt_us);
    put_u32(out, label < 0 ? kNoLabel : static_cast<std::uint32_t>(label));
    const auto* p = static_cast<const std::uint8_t*>(payload);
    out.insert(out.end(), p, p + payload_bytes);
    return out;
}

struct ContainerHeader {
    std::size_t T, C, H, W;
    std::uint32_t dt_us;
    std::int32_t label;
    ByteReader reader;
};

ContainerHeader open_container(const char magic[4], const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    char m[4];
    r.bytes(m, 4);
    require(std::memcmp(m, magic, 4) == 0, Errc::bad_magic,
            std::string("bad magic, expected ") + std::string(magic, 4));
    const std::uint32_t version = r.u32le();
    require(version == 1, Errc::bad_version, "unsupported container version " + std::to_string(version));
    ContainerHeader h{0, 0, 0, 0, 0, -1, r};
    h.T = r.u32le();
    h.C = r.u32le();
    h.H = r.u32le();
    h.W = r.u32le();
    h.dt_us = r.u32le();
    const std::uint32_t raw_label = r.u32le();
    h.label = raw_label == kNoLabel ? -1 : static_cast<std::int32_t>(raw_label);
    h.reader = r;
    return h;
}

}  // namespace

std::vector<std::uint8_t> save_slices(const SliceSequence& seq) {
    return save_container("NVSL", seq.data.shape, seq.dt_us, seq.label, seq.data.ptr(),
                          seq.data.numel());
}

SliceSequence load_slices(const std::vector<std::uint8_t>& bytes) {
    ContainerHeader h = open_container("NVSL", bytes);
    SliceSequence seq;
    seq.dt_us = h.dt_us;
    seq.label = h.label;
    seq.data = Tensor<std::uint8_t>({h.T, h.C, h.H, h.W});
    require(h.reader.remaining() >= seq.data.numel(), Errc::truncated,
            "NVSL payload shorter than header claims");
    h.reader.bytes(seq.data.ptr(), seq.data.numel());
    for (std::uint8_t v : seq.data.data)
        require(v <= 1, Errc::corrupt_payload, "NVSL payload element not binary");
    return seq;
}

void save_slices_file(const SliceSequence& seq, const std::string& path) {
    write_file(path, save_slices(seq));
}

SliceSequence load_slices_file(const std::string& path) { return load_slices(read_file(path)); }

std::vector<std::uint8_t> save_float_slices(const Tensor<float>& data, std::uint32_t dt_us,
                                            std::int32_t label) {
    require(data.ndim() == 4, Errc::shape_mismatch, "NVSF payload must be [T,C,H,W]");
    return save_container("NVSF", data.shape, dt_us, label, data.ptr(), data.numel() * sizeof(float));
}

Tensor<float> load_float_slices(const std::vector<std::uint8_t>& bytes) {
    ContainerHeader h = open_container("NVSF", bytes);
    Tensor<float> t({h.T, h.C, h.H, h.W});
    require(h.reader.remaining() >= t.numel() * sizeof(float), Errc::truncated,
            "NVSF payload shorter than header claims");
    h.reader.bytes(t.ptr(), t.numel() * sizeof(float));
    return t;
}

}  // namespace nvsnn::io
