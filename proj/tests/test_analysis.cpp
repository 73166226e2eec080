#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "nvsnn/analysis.hpp"
#include "support/instrumented.hpp"

using namespace nvsnn;
using namespace nvsnn::analysis;

namespace {

net::NetworkConfig fc_config(net::ModelKind kind, const std::string& structure, std::uint32_t T,
                             net::InputGeometry geom) {
    net::NetworkConfig cfg;
    cfg.model_kind = kind;
    cfg.structure = structure;
    cfg.loss_kind = kind == net::ModelKind::snn ? net::LossKind::snn_rate_mse
                                                : net::LossKind::rate_inspired;
    cfg.readout = kind == net::ModelKind::snn ? net::ReadoutKind::spike_rate
                                              : net::ReadoutKind::linear_readout;
    cfg.T = T;
    cfg.dt_us = 1000;
    cfg.input = geom;
    cfg.cell.grad_width = 0.5;
    cfg.parse_structure();
    return cfg;
}

io::SliceSequence random_slices(Rng& rng, std::size_t T, std::size_t H, std::size_t W,
                                double density) {
    io::SliceSequence s;
    s.dt_us = 1000;
    s.label = 0;
    s.data = Tensor<std::uint8_t>({T, 2, H, W});
    for (auto& v : s.data.data) v = rng.next_double() < density ? 1 : 0;
    return s;
}

}  // namespace

TEST_CASE("contrast matrix: diagonal, complements, bounds, matrix size") {
    // s0 = s1 = A, s2 = s3 = complement(A)
    io::SliceSequence s;
    s.dt_us = 1000;
    s.data = Tensor<std::uint8_t>({4, 2, 3, 3});
    Rng rng(2);
    const std::size_t plane = 2 * 3 * 3;
    for (std::size_t i = 0; i < plane; ++i) {
        const std::uint8_t a = rng.next_double() < 0.5 ? 1 : 0;
        s.data.data[0 * plane + i] = a;
        s.data.data[1 * plane + i] = a;
        s.data.data[2 * plane + i] = static_cast<std::uint8_t>(1 - a);
        s.data.data[3 * plane + i] = static_cast<std::uint8_t>(1 - a);
    }

    const ContrastMatrix m = contrast_matrix(s, 1);
    CHECK(m.size == 3);  // T - k
    for (std::size_t t = 0; t < m.size; ++t) {
        CHECK(m.at(t, t) >= 0.0);
        CHECK(m.at(t, t) <= 1e-12);
    }
    const double log_eps = -std::log(kContrastEpsilon);  // 36.8414
    CHECK(m.at(0, 2) == doctest::Approx(log_eps).epsilon(1e-9));
    CHECK(std::abs(m.at(0, 2) - 36.8413614879047) < 1e-6);
    for (double v : m.values) {
        CHECK(v >= 0.0);
        CHECK(v <= log_eps + 1e-12);
    }

    CHECK_THROWS_AS((void)contrast_matrix(s, 4), Error);  // k >= T
}

TEST_CASE("contrast mean strictly increases with within-sample motion") {
    const std::size_t T = 12, H = 8, W = 8;
    auto bar_sample = [&](bool moving) {
        io::SliceSequence s;
        s.dt_us = 1000;
        s.data = Tensor<std::uint8_t>({T, 2, H, W});
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t col = moving ? t % W : 3;
            for (std::size_t c = 0; c < 2; ++c)
                for (std::size_t y = 0; y < H; ++y)
                    s.data.data[((t * 2 + c) * H + y) * W + col] = 1;
        }
        return s;
    };
    const double static_mean = contrast_matrix(bar_sample(false), 2).mean;
    const double moving_mean = contrast_matrix(bar_sample(true), 2).mean;
    CHECK(moving_mean > static_mean);
    CHECK(static_mean <= 1e-12);  // identical slices everywhere
}

TEST_CASE("count_params: empty net counts zero") {
    net::Network<float> empty;
    CHECK(count_params(empty).total == 0);
}

TEST_CASE("estimate_ops formulas: alpha scaling and the LSTM/RNN factor of four") {
    // one layer of 512 feeding 512, alpha = 1: forward 262,144 adds per step
    auto cfg = fc_config(net::ModelKind::snn, "Input-512FC-10", 1, {2, 16, 16});
    auto network = net::build<float>(cfg, 1);
    SpikeStats stats;
    stats.T = 1;
    stats.input_spikes = {512, 0};  // alpha = 1 on a 512-wide input, silent top layer
    stats.state_spikes = {0, 0};
    const OpCount fwd = estimate_ops(network, Direction::forward, &stats);
    CHECK(fwd.rows[0].adds == 512u * 512u);
    CHECK(fwd.rows[0].adds == 262144u);
    CHECK(fwd.rows[0].alpha == doctest::Approx(1.0));

    stats.input_spikes = {0, 0};  // alpha = 0: event-driven idle
    const OpCount idle = estimate_ops(network, Direction::forward, &stats);
    CHECK(idle.adds == 0u);

    // LSTM forward is exactly 4x the RNN forward for the same shape
    auto rnn = net::build<float>(fc_config(net::ModelKind::rnn, "Input-24FC-5", 6, {2, 4, 4}), 1);
    auto lstm = net::build<float>(fc_config(net::ModelKind::lstm, "Input-24FC-5", 6, {2, 4, 4}), 1);
    const auto rf = estimate_ops(rnn, Direction::forward);
    const auto lf = estimate_ops(lstm, Direction::forward);
    CHECK(lf.rows[0].macs == 4 * rf.rows[0].macs);

    // backward, equal widths: the LSTM mul term collapses to 8*M*N per step pair
    auto lstm_eq =
        net::build<float>(fc_config(net::ModelKind::lstm, "Input-32FC-32FC-4", 3, {2, 4, 4}), 1);
    const auto lb = estimate_ops(lstm_eq, Direction::backward);
    // layer 1 (width 32, fed by 32): muls = 4*(T*32*32 + (T-1)*32*32) = 8*32*32*T - 4*32*32
    const std::uint64_t T = 3, M = 32;
    CHECK(lb.rows[1].muls == 4 * (T * M * M + (T - 1) * M * M));
    CHECK(lb.rows[1].macs == T * M * M + (T - 1) * M * M);
}

TEST_CASE("estimate_ops equals the instrumented counter on random FC nets") {
    struct Case {
        net::ModelKind kind;
        std::string structure;
    };
    const std::vector<Case> cases = {
        {net::ModelKind::snn, "Input-9FC-7FC-4"},  {net::ModelKind::snn, "Input-12FC-5"},
        {net::ModelKind::rnn, "Input-9FC-7FC-4"},  {net::ModelKind::rnn, "Input-11FC-3"},
        {net::ModelKind::lstm, "Input-9FC-7FC-4"}, {net::ModelKind::lstm, "Input-8FC-8FC-3"},
    };
    for (const auto& c : cases) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            auto cfg = fc_config(c.kind, c.structure, 4, {2, 3, 3});
            auto network = net::build<double>(cfg, seed);
            Rng rng(seed * 17);
            const io::SliceSequence sample = random_slices(rng, 4, 3, 3, 0.4);

            const auto run = testing::instrumented_run(network, sample);
            CHECK(run.output_max_diff <= 1e-12);  // snn paths bit-equal; dense paths to round-off

            const SpikeStats stats = measure_spike_stats(network, sample);
            const auto fwd = estimate_ops(network, Direction::forward, &stats);
            const auto bwd = estimate_ops(network, Direction::backward, &stats);

            CHECK(fwd.adds == run.forward.adds);
            CHECK(fwd.muls == run.forward.muls);
            CHECK(fwd.macs == run.forward.macs);
            CHECK(bwd.adds == run.backward.adds);
            CHECK(bwd.muls == run.backward.muls);
            CHECK(bwd.macs == run.backward.macs);
        }
    }
}

TEST_CASE("snn cross-recurrence adds its measured products to both directions") {
    auto cfg = fc_config(net::ModelKind::snn, "Input-8FC-3", 5, {2, 3, 3});
    cfg.cell.cross_recurrence = true;
    auto network = net::build<double>(cfg, 2);
    Rng rng(5);
    const io::SliceSequence sample = random_slices(rng, 5, 3, 3, 0.5);

    const auto run = testing::instrumented_run(network, sample);
    const SpikeStats stats = measure_spike_stats(network, sample);
    const auto fwd = estimate_ops(network, Direction::forward, &stats);
    const auto bwd = estimate_ops(network, Direction::backward, &stats);
    CHECK(fwd.adds == run.forward.adds);
    CHECK(bwd.macs == run.backward.macs);
}

TEST_CASE("weight histograms: single-spike snn recurrent mass at -leak") {
    auto snn = net::build<float>(fc_config(net::ModelKind::snn, "Input-16FC-4", 3, {2, 4, 4}), 3);
    const Histogram h = weight_histogram(snn, WeightClass::recurrent, 5);
    CHECK(h.total == 16 + 4);  // one value per neuron
    std::uint64_t mass = 0;
    for (auto c : h.counts) mass = std::max(mass, c);
    CHECK(mass == h.total);  // all in one bin: the constant -e^{-dt/tau}
    CHECK(h.lo == doctest::Approx(-0.3));
    CHECK(h.hi == doctest::Approx(-0.3));

    auto rnn = net::build<float>(fc_config(net::ModelKind::rnn, "Input-16FC-4", 3, {2, 4, 4}), 3);
    const Histogram hr = weight_histogram(rnn, WeightClass::recurrent, 1);
    CHECK(hr.counts[0] == hr.total);  // bins = 1 holds every entry
    CHECK(hr.total == 16 * 16);       // W2 entries
    const double bound = std::sqrt(1.0 / 16.0) + 1e-9;
    CHECK(hr.lo >= -bound);
    CHECK(hr.hi <= bound);

    const Histogram hf = weight_histogram(rnn, WeightClass::feedforward, 4);
    CHECK(hf.total == 16 * 32 + 4 * 16);  // W1 and readout.W entries
}

TEST_CASE("feature-map export: zero maps, shape trace, non-conv error") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "nvsnn_featmaps").string();
    fs::create_directories(dir);

    auto cfg = fc_config(net::ModelKind::snn, "Input-3C3-AP2-6FC-2", 4, {2, 4, 4});
    auto network = net::build<double>(cfg, 9);
    io::SliceSequence zero;
    zero.dt_us = 1000;
    zero.label = 1;
    zero.data = Tensor<std::uint8_t>({4, 2, 4, 4});

    const std::string manifest = export_feature_maps(network, zero, 0, dir);
    CHECK(fs::exists(manifest));
    const Tensor<float> map0 = io::load_float_slices(read_file(dir + "/featmap_t000.nvsf"));
    CHECK(map0.shape == std::vector<std::size_t>{1, 3, 4, 4});  // trace: 3 maps at 4x4
    for (float v : map0.data) CHECK(v == 0.0f);  // silent net, zero maps

    CHECK_THROWS_AS((void)export_feature_maps(network, zero, 2, dir), Error);  // FC layer
    CHECK_THROWS_AS((void)export_feature_maps(network, zero, 1, dir), Error);  // pool layer
    fs::remove_all(dir);
}
