#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "nvsnn/analysis.hpp"
#include "nvsnn/checkpoint.hpp"
#include "nvsnn/training.hpp"
#include "nvsnn/check/gradcheck.hpp"

using namespace nvsnn;

namespace {

net::NetworkConfig make_config(net::ModelKind kind, const std::string& structure,
                               net::LossKind loss, std::uint32_t T, net::InputGeometry geom) {
    net::NetworkConfig cfg;
    cfg.model_kind = kind;
    cfg.structure = structure;
    cfg.loss_kind = loss;
    cfg.readout = kind == net::ModelKind::snn ? net::ReadoutKind::spike_rate
                                              : net::ReadoutKind::linear_readout;
    cfg.T = T;
    cfg.dt_us = 1000;
    cfg.input = geom;
    cfg.parse_structure();
    return cfg;
}

io::SliceSequence random_slices(Rng& rng, std::size_t T, std::size_t H, std::size_t W,
                                double density, int label) {
    io::SliceSequence s;
    s.dt_us = 1000;
    s.label = label;
    s.data = Tensor<std::uint8_t>({T, 2, H, W});
    for (auto& v : s.data.data) v = rng.next_double() < density ? 1 : 0;
    return s;
}

}  // namespace

TEST_CASE("parameter counts reproduce the canonical topologies") {
    // handwritten-digits MLP, spiking: 34*34*2*512 + 512*10, no biases
    auto snn = net::build<float>(
        make_config(net::ModelKind::snn, "Input-512FC-10", net::LossKind::snn_rate_mse, 15,
                    {2, 34, 34}),
        1);
    CHECK(snn.parameter_count() == 1188864);

    // gesture MLP: input pooled 4x to 32*32*2 = 2048 features
    auto rnn = net::build<float>(
        make_config(net::ModelKind::rnn, "Input-MP4-512FC-11", net::LossKind::rate_inspired, 60,
                    {2, 128, 128}),
        1);
    const std::size_t rnn_count = rnn.parameter_count();
    CHECK(rnn_count == 2048 * 512 + 512 * 512 + 512 + 512 * 11 + 11);
    CHECK(rnn_count == 1316875);

    auto lstm = net::build<float>(
        make_config(net::ModelKind::lstm, "Input-MP4-512FC-11", net::LossKind::rate_inspired, 60,
                    {2, 128, 128}),
        1);
    CHECK(lstm.parameter_count() == 5250571);

    auto snn_g = net::build<float>(
        make_config(net::ModelKind::snn, "Input-MP4-512FC-11", net::LossKind::snn_rate_mse, 60,
                    {2, 128, 128}),
        1);
    const double r1 = double(snn_g.parameter_count()) / double(rnn_count);
    const double r2 = double(snn_g.parameter_count()) / double(lstm.parameter_count());
    CHECK(r1 > 0.78);
    CHECK(r1 < 0.82);
    CHECK(r2 > 0.18);
    CHECK(r2 < 0.22);

    // count_params agrees with the sum over named tensors
    const auto pc = analysis::count_params(snn);
    CHECK(pc.total == snn.parameter_count());
}

TEST_CASE("gesture CNN shape trace") {
    auto cnn = net::build<float>(
        make_config(net::ModelKind::snn, "Input-MP4-64C3-128C3-AP2-128C3-AP2-256FC-11",
                    net::LossKind::snn_rate_mse, 60, {2, 128, 128}),
        1);
    const std::vector<std::vector<std::size_t>> expect = {
        {2, 128, 128}, {2, 32, 32},   {64, 32, 32}, {128, 32, 32},
        {128, 16, 16}, {128, 16, 16}, {128, 8, 8},  {256},
        {11}};
    REQUIRE(cnn.shape_trace.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(cnn.shape_trace[i] == expect[i]);
}

TEST_CASE("malformed layer chains are config errors") {
    net::NetworkConfig cfg;
    for (const char* bad : {"512FC-10", "Input-512FC", "Input-FC512-10", "Input-5X5-10",
                            "Input--10"}) {
        cfg.structure = bad;
        CHECK_THROWS_AS(cfg.parse_structure(), Error);
    }
    // pooling that does not divide the input is caught at build
    auto cfg2 = make_config(net::ModelKind::snn, "Input-MP4-8FC-2", net::LossKind::snn_rate_mse, 2,
                            {2, 5, 5});
    CHECK_THROWS_AS((void)net::build<float>(cfg2, 1), Error);
}

TEST_CASE("snn/loss invariants are enforced") {
    auto cfg = make_config(net::ModelKind::snn, "Input-8FC-2", net::LossKind::last_step, 2,
                           {2, 2, 2});
    CHECK_THROWS_AS((void)net::build<float>(cfg, 1), Error);
    auto cfg2 = make_config(net::ModelKind::rnn, "Input-8FC-2", net::LossKind::snn_rate_mse, 2,
                            {2, 2, 2});
    CHECK_THROWS_AS((void)net::build<float>(cfg2, 1), Error);
}

TEST_CASE("all-zero input: snn stays silent, zero-params lstm emits its readout bias") {
    auto snn = net::build<double>(
        make_config(net::ModelKind::snn, "Input-8FC-3", net::LossKind::snn_rate_mse, 4, {2, 2, 2}),
        3);
    io::SliceSequence zero;
    zero.dt_us = 1000;
    zero.label = 0;
    zero.data = Tensor<std::uint8_t>({4, 2, 2, 2});
    std::vector<const io::SliceSequence*> batch{&zero};
    for (const auto& out : snn.forward(batch, false))
        for (double v : out.data) CHECK(v == 0.0);

    auto lstm = net::build<double>(
        make_config(net::ModelKind::lstm, "Input-8FC-3", net::LossKind::rate_inspired, 4, {2, 2, 2}),
        3);
    for (auto& p : lstm.parameters())
        if (p.name != "readout.b") p.value->zero();
    auto& bias = *lstm.parameters().back().value;  // readout.b is registered last
    REQUIRE(lstm.parameters().back().name == "readout.b");
    for (const auto& out : lstm.forward(batch, false))
        for (std::size_t c = 0; c < 3; ++c) CHECK(out.at(0, c) == doctest::Approx(bias.data[c]));
}

TEST_CASE("zero loss gradients produce zero parameter gradients; T=1 is plain backprop") {
    auto network = net::build<double>(
        make_config(net::ModelKind::rnn, "Input-6FC-3", net::LossKind::rate_inspired, 3, {2, 2, 2}),
        5);
    Rng rng(4);
    const io::SliceSequence s = random_slices(rng, 3, 2, 2, 0.5, 1);
    std::vector<const io::SliceSequence*> batch{&s};

    network.zero_grads();
    network.forward(batch, true);
    std::vector<Tensor<double>> zero_grads(3, Tensor<double>({1, 3}));
    network.backward(zero_grads);
    for (auto& p : network.parameters())
        for (double v : p.grad->data) CHECK(v == 0.0);

    // T = 1: no temporal terms; finite differences still close
    auto net1 = net::build<double>(
        make_config(net::ModelKind::rnn, "Input-6FC-3", net::LossKind::last_step, 1, {2, 2, 2}), 6);
    const io::SliceSequence s1 = random_slices(rng, 1, 2, 2, 0.6, 2);
    std::vector<const io::SliceSequence*> b1{&s1};
    Tensor<double> Y({1, 3});
    Y.data[2] = 1.0;
    net1.zero_grads();
    auto outputs = net1.forward(b1, true);
    auto loss = train::compute_loss(net1.config.loss_kind, outputs, Y);
    net1.backward(loss.grads);
    std::vector<Tensor<double>> analytic;
    for (auto& p : net1.parameters()) analytic.push_back(*p.grad);
    auto params = net1.parameters();
    auto loss_fn = [&] {
        return train::compute_loss(net1.config.loss_kind, net1.forward(b1, false), Y).loss;
    };
    std::vector<std::pair<std::string, Tensor<double>*>> fd_p;
    std::vector<const Tensor<double>*> fd_a;
    for (std::size_t i = 0; i < params.size(); ++i) {
        fd_p.push_back({params[i].name, params[i].value});
        fd_a.push_back(&analytic[i]);
    }
    CHECK(testing::finite_diff_check(loss_fn, fd_p, fd_a).max_rel_err <= 1e-5);
}

TEST_CASE("determinism: same seed and inputs give bit-identical outputs and gradients") {
    auto run_once = [](std::uint64_t seed) {
        auto network = net::build<double>(
            make_config(net::ModelKind::lstm, "Input-6FC-3", net::LossKind::per_step, 3, {2, 2, 2}),
            seed);
        Rng rng(17);
        const io::SliceSequence s = random_slices(rng, 3, 2, 2, 0.5, 1);
        std::vector<const io::SliceSequence*> batch{&s};
        Tensor<double> Y({1, 3});
        Y.data[1] = 1.0;
        network.zero_grads();
        auto outputs = network.forward(batch, true);
        auto loss = train::compute_loss(network.config.loss_kind, outputs, Y);
        network.backward(loss.grads);
        std::vector<double> blob;
        for (const auto& o : outputs) blob.insert(blob.end(), o.data.begin(), o.data.end());
        for (auto& p : network.parameters())
            blob.insert(blob.end(), p.grad->data.begin(), p.grad->data.end());
        return blob;
    };
    CHECK(run_once(11) == run_once(11));
    CHECK(run_once(11) != run_once(12));
}

TEST_CASE("tape sufficiency: poisoning any tape field class corrupts the gradients") {
    Rng rng(8);
    const io::SliceSequence s = random_slices(rng, 3, 2, 2, 0.6, 0);
    std::vector<const io::SliceSequence*> batch{&s};
    Tensor<double> Y({1, 3});
    Y.data[0] = 1.0;

    auto grads_with_poison = [&](net::ModelKind kind, net::LossKind loss, int poison) {
        auto cfg = make_config(kind, "Input-6FC-3", loss, 3, {2, 2, 2});
        cfg.cell.grad_width = 5.0;  // keep the surrogate alive so every tape field matters
        cfg.cell.leak = 0.5;
        auto network = net::build<double>(cfg, 21);
        network.zero_grads();
        auto outputs = network.forward(batch, true);
        // poison one tape field class at t=1 before running backward
        if (auto* lif = dynamic_cast<net::FcLifLayer<double>*>(network.layers[0].get())) {
            if (poison == 1) lif->tape[1].u.fill(std::nan(""));
            if (poison == 2) lif->tape[1].o.fill(std::nan(""));
            if (poison == 3) lif->tape[1].in.fill(0.0);  // drop recorded input spikes
        }
        if (auto* rnn = dynamic_cast<net::FcRnnLayer<double>*>(network.layers[0].get())) {
            if (poison == 1) rnn->tape[1].h.fill(std::nan(""));
            if (poison == 2) rnn->tape[1].x.fill(std::nan(""));
            if (poison == 3) rnn->tape[1].h_prev.fill(std::nan(""));
        }
        if (auto* lstm = dynamic_cast<net::FcLstmLayer<double>*>(network.layers[0].get())) {
            if (poison == 1) lstm->tape[1].gate[cells::kForget].fill(std::nan(""));
            if (poison == 2) lstm->tape[1].c_prev.fill(std::nan(""));
            if (poison == 3) lstm->tape[1].tanh_c.fill(std::nan(""));
        }
        auto loss_res = train::compute_loss(network.config.loss_kind, outputs, Y);
        network.backward(loss_res.grads);
        std::vector<double> blob;
        for (auto& p : network.parameters())
            blob.insert(blob.end(), p.grad->data.begin(), p.grad->data.end());
        return blob;
    };

    for (auto [kind, loss] :
         std::initializer_list<std::pair<net::ModelKind, net::LossKind>>{
             {net::ModelKind::snn, net::LossKind::snn_rate_mse},
             {net::ModelKind::rnn, net::LossKind::rate_inspired},
             {net::ModelKind::lstm, net::LossKind::rate_inspired}}) {
        const auto clean = grads_with_poison(kind, loss, 0);
        CHECK(clean == grads_with_poison(kind, loss, 0));  // poison-free runs replay
        for (int poison = 1; poison <= 3; ++poison)
            CHECK(clean != grads_with_poison(kind, loss, poison));
    }
}

TEST_CASE("gradient flow: W2 = 0 kills the rnn temporal path, the lif membrane path persists") {
    // RNN: distinct one-hot input per timestep; with W2 = 0 and a last-step
    // loss, dW1 columns touched only at t < T must stay zero
    auto rnn = net::build<double>(
        make_config(net::ModelKind::rnn, "Input-4FC-2", net::LossKind::last_step, 3, {1, 2, 2}), 2);
    dynamic_cast<net::FcRnnLayer<double>*>(rnn.layers[0].get())->params.W2.zero();

    io::SliceSequence s;
    s.dt_us = 1000;
    s.label = 0;
    s.data = Tensor<std::uint8_t>({3, 1, 2, 2});
    s.data.data[0 * 4 + 0] = 1;  // t=0 touches feature 0
    s.data.data[1 * 4 + 1] = 1;  // t=1 touches feature 1
    s.data.data[2 * 4 + 2] = 1;  // t=2 touches feature 2
    std::vector<const io::SliceSequence*> batch{&s};
    Tensor<double> Y({1, 2});
    Y.data[0] = 1.0;

    rnn.zero_grads();
    auto outputs = rnn.forward(batch, true);
    rnn.backward(train::compute_loss(rnn.config.loss_kind, outputs, Y).grads);
    const auto& dW1 = *rnn.parameters()[0].grad;  // [4 units, 4 features]
    REQUIRE(rnn.parameters()[0].name == "L0.W1");
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(dW1.at(j, 0) == 0.0);  // features seen only before the last step
        CHECK(dW1.at(j, 1) == 0.0);
    }

    // LIF with a wide surrogate: the membrane path carries gradient to t < T
    auto cfg = make_config(net::ModelKind::snn, "Input-4FC-2", net::LossKind::snn_rate_mse, 3,
                           {1, 2, 2});
    cfg.cell.grad_width = 10.0;  // f' > 0 everywhere
    cfg.cell.leak = 0.5;
    auto snn = net::build<double>(cfg, 2);
    snn.zero_grads();
    auto outputs2 = snn.forward(batch, true);
    // inject loss gradient only at the last step
    std::vector<Tensor<double>> grads_t(3, Tensor<double>({1, 2}));
    grads_t[2].fill(1.0);
    snn.backward(grads_t);
    const auto& dW = *snn.parameters()[0].grad;
    REQUIRE(snn.parameters()[0].name == "L0.W");
    double early_mass = 0.0;
    for (std::size_t j = 0; j < 4; ++j) early_mass += std::abs(dW.at(j, 0)) + std::abs(dW.at(j, 1));
    CHECK(early_mass > 0.0);
}

TEST_CASE("checkpoint round-trip preserves parameters and config echo") {
    const std::string path = std::filesystem::temp_directory_path() / "nvsnn_test.nvck";
    auto network = net::build<float>(
        make_config(net::ModelKind::lstm, "Input-6FC-3", net::LossKind::rate_inspired, 3, {2, 2, 2}),
        77);
    ExperimentConfig ec;
    ec.network = network.config;
    const std::string echo = encode_config(ec);
    net::save_checkpoint(network, echo, path);

    CHECK(net::read_checkpoint_config(path) == echo);

    auto restored = net::build<float>(parse_config_text(echo).network, 1);  // different init seed
    net::load_checkpoint_params(restored, path);
    auto a = network.parameters();
    auto b = restored.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value->data == b[i].value->data);

    // the parameter count equals the sum of checkpoint tensor payload sizes
    const auto bytes = read_file(path);
    std::string cfg_text;
    ByteReader r = net::open_checkpoint(bytes, cfg_text);
    const std::uint32_t n_tensors = r.u32le();
    std::size_t payload_elems = 0;
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        r.skip(r.u32le());              // name
        const std::uint32_t ndim = r.u32le();
        for (std::uint32_t d = 0; d < ndim; ++d) r.u32le();
        const std::uint32_t elem = r.u32le();
        const std::uint64_t nbytes = r.u64le();
        payload_elems += nbytes / elem;
        r.skip(nbytes);
    }
    CHECK(payload_elems == analysis::count_params(network).total);

    std::filesystem::remove(path);
}

TEST_CASE("a readout directly on a conv map is a config error") {
    for (auto kind : {net::ModelKind::rnn, net::ModelKind::lstm}) {
        auto cfg = make_config(kind, "Input-3C3-2", net::LossKind::rate_inspired, 3, {2, 4, 4});
        CHECK_THROWS_AS((void)net::build<double>(cfg, 1), Error);
    }
}

TEST_CASE("conv cells: gradients match finite differences (conv stacks)") {
    for (auto kind : {net::ModelKind::rnn, net::ModelKind::lstm}) {
        auto cfg = make_config(kind, "Input-3C3-AP2-4FC-2", net::LossKind::rate_inspired, 2,
                               {2, 4, 4});
        auto network = net::build<double>(cfg, 9);
        Rng rng(31);
        const io::SliceSequence s = random_slices(rng, 2, 4, 4, 0.4, 1);
        std::vector<const io::SliceSequence*> batch{&s};
        Tensor<double> Y({1, 2});
        Y.data[1] = 1.0;

        network.zero_grads();
        auto outputs = network.forward(batch, true);
        auto loss = train::compute_loss(network.config.loss_kind, outputs, Y);
        network.backward(loss.grads);
        std::vector<Tensor<double>> analytic;
        for (auto& p : network.parameters()) analytic.push_back(*p.grad);
        auto params = network.parameters();
        auto loss_fn = [&] {
            return train::compute_loss(network.config.loss_kind, network.forward(batch, false), Y)
                .loss;
        };
        std::vector<std::pair<std::string, Tensor<double>*>> fd_p;
        std::vector<const Tensor<double>*> fd_a;
        for (std::size_t i = 0; i < params.size(); ++i) {
            fd_p.push_back({params[i].name, params[i].value});
            fd_a.push_back(&analytic[i]);
        }
        const auto rep = testing::finite_diff_check(loss_fn, fd_p, fd_a);
        CHECK(rep.max_rel_err <= 1e-5);
    }
}

TEST_CASE("conv-lif equals an fc-lif with the lowered convolution matrix") {
    // conv3x3 is linear, so a ConvLIF layer must behave exactly like an FcLIF
    // whose weight matrix is the lowered convolution
    Rng rng(12);
    const std::size_t Ci = 2, Co = 3, H = 4, W = 4;
    auto cfg = make_config(net::ModelKind::snn, "Input-3C3-2", net::LossKind::snn_rate_mse, 3,
                           {Ci, H, W});
    cfg.cell.grad_width = 2.0;
    auto conv_net = net::build<double>(cfg, 55);
    auto* conv = dynamic_cast<net::ConvLifLayer<double>*>(conv_net.layers[0].get());
    REQUIRE(conv != nullptr);

    // lower K into a [Co*H*W, Ci*H*W] matrix
    Tensor<double> Wm({Co * H * W, Ci * H * W});
    for (std::size_t co = 0; co < Co; ++co)
        for (std::size_t oy = 0; oy < H; ++oy)
            for (std::size_t ox = 0; ox < W; ++ox)
                for (std::size_t ci = 0; ci < Ci; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = int(oy) + ky - 1, ix = int(ox) + kx - 1;
                            if (iy < 0 || ix < 0 || iy >= int(H) || ix >= int(W)) continue;
                            Wm.at((co * H + oy) * W + ox, (ci * H + iy) * W + ix) =
                                conv->K.data[((co * Ci + ci) * 3 + ky) * 3 + kx];
                        }

    cells::LifParams<double> fc;
    fc.W = Wm;
    fc.u_th = conv_net.config.cell.u_th;
    fc.leak = conv_net.config.cell.leak;
    fc.a = conv_net.config.cell.grad_width;

    const io::SliceSequence s = random_slices(rng, 3, H, W, 0.5, 0);
    std::vector<const io::SliceSequence*> batch{&s};
    conv_net.zero_grads();
    auto outputs = conv_net.forward(batch, true);

    cells::LifState<double> st;
    st.reset(1, Co * H * W);
    for (std::size_t t = 0; t < 3; ++t) {
        Tensor<double> x({1, Ci * H * W});
        for (std::size_t i = 0; i < x.numel(); ++i)
            x.data[i] = static_cast<double>(s.data.data[t * x.numel() + i]);
        cells::lif_step(fc, st, x, static_cast<cells::LifTapeEntry<double>*>(nullptr));
        // compare against the conv layer's taped spikes at this step
        const auto& conv_o = conv->tape_o[t];
        for (std::size_t i = 0; i < st.o.numel(); ++i)
            CHECK(st.o.data[i] == doctest::Approx(conv_o.data[i]));
        for (std::size_t i = 0; i < st.u.numel(); ++i)
            CHECK(st.u.data[i] == doctest::Approx(conv->tape_u[t].data[i]).epsilon(1e-12));
    }
}
