#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nvsnn/config.hpp"

using namespace nvsnn;

namespace {

const char* kBase = R"(
[data]
train_dir = /tmp/tr
test_dir = /tmp/te
dt_us = 3000
T = 15
channels = 2
height = 34
width = 34

[model]
kind = snn
structure = Input-512FC-10
loss = snn_rate_mse

[cell]
u_th = 0.3
leak = 0.3
grad_width = 0.25

[train]
max_epoch = 20
batch_size = 50
lr = 1e-4
seed = 7
out_dir = /tmp/run
)";

}  // namespace

TEST_CASE("config round-trips through its canonical encoding") {
    const ExperimentConfig a = parse_config_text(kBase);
    CHECK(a.network.model_kind == net::ModelKind::snn);
    CHECK(a.network.T == 15);
    CHECK(a.network.dt_us == 3000);
    CHECK(a.train.seed == 7);
    CHECK(a.train.lr == doctest::Approx(1e-4));
    CHECK(a.network.stack.size() == 1);
    CHECK(a.network.n_classes == 10);

    const std::string echo = encode_config(a);
    const ExperimentConfig b = parse_config_text(echo);
    CHECK(encode_config(b) == echo);
    CHECK(b.network.structure == a.network.structure);
    CHECK(b.train.batch_size == a.train.batch_size);
}

TEST_CASE("unknown keys and sections fail closed") {
    std::string bad1 = std::string(kBase) + "\n[train]\nlearning_rate = 3\n";
    CHECK_THROWS_AS((void)parse_config_text(bad1), Error);

    std::string bad2 = std::string(kBase) + "\n[optimizer]\nlr = 1\n";
    CHECK_THROWS_AS((void)parse_config_text(bad2), Error);

    std::string bad3 = "lr = 1\n";  // key before any section
    CHECK_THROWS_AS((void)parse_config_text(bad3), Error);
}

TEST_CASE("value types are validated") {
    std::string bad = std::string(kBase) + "\n[train]\nmax_epoch = soon\n";
    CHECK_THROWS_AS((void)parse_config_text(bad), Error);
    std::string bad2 = std::string(kBase) + "\n[cell]\nleakage_enabled = maybe\n";
    CHECK_THROWS_AS((void)parse_config_text(bad2), Error);
    std::string bad3 = std::string(kBase) + "\n[cell]\nleak = 0.3x\n";
    CHECK_THROWS_AS((void)parse_config_text(bad3), Error);
}

TEST_CASE("missing structure is an error; comments and blanks are tolerated") {
    CHECK_THROWS_AS((void)parse_config_text("[model]\nkind = rnn\n"), Error);
    const ExperimentConfig ok = parse_config_text(
        "# experiment\n[model]\nstructure = Input-8FC-2   # tiny\nkind = rnn\nloss = last_step\n");
    CHECK(ok.network.n_classes == 2);
    CHECK(ok.network.loss_kind == net::LossKind::last_step);
}
