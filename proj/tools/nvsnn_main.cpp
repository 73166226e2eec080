// nvsnn: train and analyze spiking / recurrent / LSTM models on event-stream
// vision data. Subcommands: prepare, train, eval, analyze, gradcheck.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "nvsnn/analysis.hpp"
#include "nvsnn/check/suite.hpp"
#include "nvsnn/checkpoint.hpp"
#include "nvsnn/manifest.hpp"
#include "nvsnn/synth.hpp"
#include "nvsnn/training.hpp"

namespace fs = std::filesystem;
using namespace nvsnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

data::EventDataset load_raw(const std::string& dir, const std::string& dataset) {
    if (dataset == "nmnist") return data::load_nmnist_dir(dir);
    if (dataset == "gesture") return data::load_gesture_dir(dir);
    fail(Errc::usage, "unknown dataset kind: " + dataset);
}

int cmd_prepare(const std::string& raw_dir, const std::string& out_dir, const std::string& dataset,
                std::uint32_t dt_us, std::uint32_t T) {
    for (const std::string split : {"train", "test"}) {
        const std::string src = raw_dir + "/" + split;
        if (!fs::is_directory(src)) {
            std::cout << "prepare: no " << split << " split under " << raw_dir << "\n";
            continue;
        }
        const data::EventDataset events = load_raw(src, dataset);
        const std::string dst = out_dir + "/" + split;
        fs::create_directories(dst);
        std::size_t i = 0;
        for (const auto& stream : events.streams) {
            stream.validate();
            const io::SliceSequence seq = io::collapse(stream, dt_us, T);
            char name[32];
            std::snprintf(name, sizeof name, "%06zu.nvsl", i++);
            io::save_slices_file(seq, dst + "/" + name);
        }
        std::cout << "prepare: " << split << ": " << events.streams.size() << " recordings -> "
                  << dst << " [T=" << T << ", dt_us=" << dt_us << "]\n";
    }
    return kExitOk;
}

void require_geometry(net::NetworkConfig& cfg, const data::SliceDataset& ds) {
    const auto& s0 = ds.samples.front();
    if (cfg.input.height == 0) {
        cfg.input = {s0.channels(), s0.height(), s0.width()};
    } else {
        require(cfg.input.channels == s0.channels() && cfg.input.height == s0.height() &&
                    cfg.input.width == s0.width(),
                Errc::config, "configured geometry does not match the dataset");
    }
    for (const auto& s : ds.samples) {
        require(s.T() == ds.samples.front().T(), Errc::shape_mismatch, "ragged cache T");
        require(s.channels() == s0.channels() && s.height() == s0.height() && s.width() == s0.width(),
                Errc::shape_mismatch, "ragged cache geometry");
    }
    require(ds.samples.front().T() == cfg.T, Errc::config,
            "cache T=" + std::to_string(ds.samples.front().T()) + " but config expects T=" +
                std::to_string(cfg.T));
    require(ds.samples.front().dt_us == cfg.dt_us, Errc::config,
            "cache dt_us does not match the config");
}

int cmd_train(const std::string& config_path, std::size_t epochs_override,
              std::size_t limit_train, std::size_t limit_test) {
    ExperimentConfig cfg = parse_config_file(config_path);
    if (epochs_override) cfg.train.max_epoch = epochs_override;

    data::SliceDataset train_ds = data::load_nvsl_dir(cfg.train_dir);
    data::SliceDataset test_ds = data::load_nvsl_dir(cfg.test_dir);
    if (limit_train && train_ds.size() > limit_train) train_ds.samples.resize(limit_train);
    if (limit_test && test_ds.size() > limit_test) test_ds.samples.resize(limit_test);
    require_geometry(cfg.network, train_ds);

    fs::create_directories(cfg.out_dir);
    const std::string echo = encode_config(cfg);

    RunManifest manifest;
    manifest.config_text = echo;
    manifest.seed = cfg.train.seed;
    manifest.train_checksum = data::dataset_checksum(cfg.train_dir);
    manifest.test_checksum = data::dataset_checksum(cfg.test_dir);
    manifest.train_samples = train_ds.size();
    manifest.test_samples = test_ds.size();
    manifest.started_at = current_timestamp();
    manifest.write(cfg.out_dir + "/manifest.txt");

    auto network = net::build<float>(cfg.network, cfg.train.seed);
    std::cout << "model: " << net::to_string(cfg.network.model_kind) << " "
              << cfg.network.structure << " (" << network.parameter_count() << " parameters)\n";

    const std::string log_path = cfg.out_dir + "/log.csv";
    write_text_file(log_path, "epoch,split,loss,accuracy,wall_seconds\n");
    const auto log = train::train_loop<float>(
        network, train_ds, test_ds, cfg.train, [&](const train::EpochLog& e) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "%zu,train,%.6f,%.6f,%.3f\n%zu,test,%.6f,%.6f,%.3f\n",
                          e.epoch, e.train_loss, e.train_acc, e.seconds, e.epoch, e.test_loss,
                          e.test_acc, e.seconds);
            std::ofstream(log_path, std::ios::app) << buf;
            std::printf("epoch %3zu  train loss %.4f acc %.4f | test loss %.4f acc %.4f (%.1fs)\n",
                        e.epoch, e.train_loss, e.train_acc, e.test_loss, e.test_acc, e.seconds);
        });

    net::save_checkpoint(network, echo, cfg.out_dir + "/checkpoint.nvck");
    std::printf("best test accuracy %.4f (epoch %zu); final %.4f\n", log.best_test_acc,
                log.best_epoch, log.final_test_acc);
    std::cout << "artifacts: " << cfg.out_dir << "/{manifest.txt,log.csv,checkpoint.nvck}\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& dataset,
             std::uint32_t dt_us, std::uint32_t T, std::size_t batch) {
    const std::string echo = net::read_checkpoint_config(checkpoint);
    ExperimentConfig cfg = parse_config_text(echo);
    auto network = net::build<float>(cfg.network, cfg.train.seed);
    net::load_checkpoint_params(network, checkpoint);

    if (dt_us == 0) dt_us = cfg.network.dt_us;
    if (T == 0) T = cfg.network.T;

    train::EvalResult result;
    if (!dataset.empty()) {
        const data::EventDataset events = load_raw(data_dir, dataset);
        result = train::evaluate_at(network, events, dt_us, T, batch);
    } else {
        data::SliceDataset ds = data::load_nvsl_dir(data_dir);
        const std::uint32_t cache_dt = ds.samples.front().dt_us;
        require(dt_us % cache_dt == 0, Errc::config,
                "requested dt_us must be a multiple of the cache dt_us");
        const std::uint32_t group = dt_us / cache_dt;
        for (auto& s : ds.samples) {
            if (group > 1) s = io::or_group(s, group);
            require(s.T() >= T, Errc::config, "cache too short for requested T");
            if (s.T() > T) {
                io::SliceSequence trimmed;
                trimmed.dt_us = s.dt_us;
                trimmed.label = s.label;
                trimmed.data = Tensor<std::uint8_t>({T, s.channels(), s.height(), s.width()});
                std::copy_n(s.data.ptr(), trimmed.data.numel(), trimmed.data.ptr());
                s = std::move(trimmed);
            }
        }
        const double train_leak = network.config.cell.leak;
        if (cfg.network.cell.adaptive_leakage)
            network.set_leak(std::pow(train_leak, double(dt_us) / double(cfg.network.dt_us)));
        result = train::evaluate(network, ds, batch);
        if (cfg.network.cell.adaptive_leakage) network.set_leak(train_leak);
    }

    const std::uint64_t horizon = std::uint64_t(dt_us) * T;
    const std::uint64_t train_horizon = std::uint64_t(cfg.network.dt_us) * cfg.network.T;
    std::printf("accuracy %.4f  (T=%u, dt_us=%u, T*dt=%.3f ms)\n", result.accuracy, T, dt_us,
                horizon / 1000.0);
    if (horizon != train_horizon)
        std::printf("note: T*dt = %.3f ms differs from the training horizon %.3f ms\n",
                    horizon / 1000.0, train_horizon / 1000.0);
    return kExitOk;
}

template <typename Fn>
int analyze_with_net(const std::string& checkpoint, Fn&& fn) {
    const std::string echo = net::read_checkpoint_config(checkpoint);
    ExperimentConfig cfg = parse_config_text(echo);
    auto network = net::build<float>(cfg.network, cfg.train.seed);
    net::load_checkpoint_params(network, checkpoint);
    return fn(network);
}

int cmd_gradcheck(const std::string& model, std::uint64_t seed, bool mutate) {
    if (mutate) {
        const auto rep = check::snn_mutation_check(seed);
        std::printf("replay == production: %s\n", rep.replay_matches_production ? "yes" : "NO");
        std::printf("mutant max deviation from oracle: %.3e -> %s\n", rep.mutant_err,
                    rep.mutant_caught ? "caught" : "NOT CAUGHT");
        return rep.replay_matches_production && rep.mutant_caught ? kExitOk : kExitCheck;
    }
    bool pass = true;
    if (model == "snn" || model == "all") {
        const auto rep = check::snn_oracle_check(20, seed);
        std::printf("snn  vs graph oracle: max abs err %.3e over %zu coords -> %s\n", rep.max_err,
                    rep.checked, rep.pass ? "pass (<= 1e-10)" : "FAIL");
        pass &= rep.pass;
    }
    if (model == "rnn" || model == "all") {
        const auto rep = check::smooth_model_check(net::ModelKind::rnn, 20, seed);
        std::printf("rnn  vs finite diff:  max rel err %.3e over %zu coords -> %s\n", rep.max_err,
                    rep.checked, rep.pass ? "pass (<= 1e-5)" : "FAIL");
        pass &= rep.pass;
    }
    if (model == "lstm" || model == "all") {
        const auto rep = check::smooth_model_check(net::ModelKind::lstm, 20, seed);
        std::printf("lstm vs finite diff:  max rel err %.3e over %zu coords -> %s\n", rep.max_err,
                    rep.checked, rep.pass ? "pass (<= 1e-5)" : "FAIL");
        pass &= rep.pass;
    }
    return pass ? kExitOk : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-stream SNN/RNN/LSTM workbench"};
    app.require_subcommand(1);

    // prepare
    auto* prepare = app.add_subcommand("prepare", "parse raw recordings and cache binary slices");
    std::string raw_dir, out_dir, dataset = "nmnist";
    std::uint32_t dt_us = 1000, T = 15;
    prepare->add_option("--raw", raw_dir, "raw dataset root (train/ and test/ splits)")->required();
    prepare->add_option("--out", out_dir, "output cache root")->required();
    prepare->add_option("--dataset", dataset, "nmnist | gesture");
    prepare->add_option("--dt-us", dt_us, "temporal resolution per slice, microseconds");
    prepare->add_option("--T", T, "number of slices kept");

    // train
    auto* tr = app.add_subcommand("train", "train a model from a config file");
    std::string config_path;
    std::size_t epochs_override = 0, limit_train = 0, limit_test = 0;
    tr->add_option("config", config_path, "experiment config file")->required();
    tr->add_option("--epochs", epochs_override, "override [train] max_epoch");
    tr->add_option("--limit", limit_train, "cap the number of training samples");
    tr->add_option("--test-limit", limit_test, "cap the number of test samples");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ckpt, eval_data, eval_dataset;
    std::uint32_t eval_dt = 0, eval_T = 0;
    std::size_t eval_batch = 50;
    ev->add_option("--checkpoint", ckpt, "NVCK checkpoint")->required();
    ev->add_option("--data", eval_data, "NVSL cache dir, or raw dir with --dataset")->required();
    ev->add_option("--dataset", eval_dataset, "parse --data as raw: nmnist | gesture");
    ev->add_option("--dt-us", eval_dt, "evaluation temporal resolution (default: training dt)");
    ev->add_option("--T", eval_T, "evaluation timesteps (default: training T)");
    ev->add_option("--batch", eval_batch, "evaluation batch size");

    // analyze
    auto* an = app.add_subcommand("analyze", "post-hoc measurements");
    an->require_subcommand(1);
    std::string an_input, an_out = "-", an_ckpt, an_dir, an_which = "recurrent", an_direction = "forward";
    std::size_t an_k = 4, an_bins = 64, an_layer = 0, an_samples = 100;
    std::uint64_t an_seed = 1;
    auto* contrast = an->add_subcommand("contrast", "temporal-contrast cross-entropy matrix");
    contrast->add_option("--input", an_input, "one .nvsl sample");
    contrast->add_option("--dir", an_dir, "NVSL dir: mean/variance over a sample of recordings");
    contrast->add_option("--k", an_k, "window length minus one");
    contrast->add_option("--samples", an_samples, "recordings to sample with --dir");
    contrast->add_option("--seed", an_seed, "sampling seed for --dir");
    contrast->add_option("--out", an_out, "CSV output path ('-' = stdout)");
    auto* params_cmd = an->add_subcommand("params", "parameter counts");
    params_cmd->add_option("--checkpoint", an_ckpt)->required();
    params_cmd->add_option("--out", an_out);
    auto* ops = an->add_subcommand("ops", "operation-count accounting");
    ops->add_option("--checkpoint", an_ckpt)->required();
    ops->add_option("--direction", an_direction, "forward | backward");
    ops->add_option("--sample", an_input, "one .nvsl sample (measures spike rates)");
    ops->add_option("--out", an_out);
    auto* hist = an->add_subcommand("hist", "weight histograms");
    hist->add_option("--checkpoint", an_ckpt)->required();
    hist->add_option("--which", an_which, "recurrent | feedforward");
    hist->add_option("--bins", an_bins);
    hist->add_option("--out", an_out);
    auto* feat = an->add_subcommand("featmaps", "per-timestep conv feature maps");
    feat->add_option("--checkpoint", an_ckpt)->required();
    feat->add_option("--sample", an_input, "one .nvsl sample")->required();
    feat->add_option("--layer", an_layer, "conv layer index in stack order")->required();
    feat->add_option("--out-dir", an_dir, "output directory")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "run the gradient-oracle suite on tiny nets");
    std::string gc_model = "all";
    std::uint64_t gc_seed = 1;
    bool gc_mutate = false;
    gc->add_option("--model", gc_model, "snn | rnn | lstm | all");
    gc->add_option("--seed", gc_seed);
    gc->add_flag("--mutate", gc_mutate, "verify the oracle catches a sign-flip mutant");

    CLI11_PARSE(app, argc, argv);

    auto emit = [&](const std::string& text) {
        if (an_out == "-")
            std::cout << text;
        else
            write_text_file(an_out, text);
    };

    try {
        if (*prepare) return cmd_prepare(raw_dir, out_dir, dataset, dt_us, T);
        if (*tr) return cmd_train(config_path, epochs_override, limit_train, limit_test);
        if (*ev) return cmd_eval(ckpt, eval_data, eval_dataset, eval_dt, eval_T, eval_batch);
        if (*gc) return cmd_gradcheck(gc_model, gc_seed, gc_mutate);
        if (*contrast) {
            if (!an_dir.empty()) {
                data::SliceDataset ds = data::load_nvsl_dir(an_dir);
                Rng rng(an_seed);
                double mean_sum = 0.0, var_sum = 0.0;
                const std::size_t n = std::min(an_samples, ds.size());
                for (std::size_t i = 0; i < n; ++i) {
                    const auto& s = ds.samples[rng.next_below(ds.size())];
                    const auto m = analysis::contrast_matrix(s, an_k);
                    mean_sum += m.mean;
                    var_sum += m.variance;
                }
                std::printf("recordings %zu  k %zu  seed %llu  mean %.6f  variance %.6f\n", n, an_k,
                            static_cast<unsigned long long>(an_seed), mean_sum / double(n),
                            var_sum / double(n));
            } else {
                require(!an_input.empty(), Errc::usage, "contrast needs --input or --dir");
                const auto m = analysis::contrast_matrix(io::load_slices_file(an_input), an_k);
                emit(m.to_csv());
                std::printf("size %zux%zu  mean %.6f  variance %.6f\n", m.size, m.size, m.mean,
                            m.variance);
            }
            return kExitOk;
        }
        if (*params_cmd)
            return analyze_with_net(an_ckpt, [&](net::Network<float>& n) {
                const auto pc = analysis::count_params(n);
                emit(pc.to_csv());
                std::printf("total parameters: %zu\n", pc.total);
                return kExitOk;
            });
        if (*ops)
            return analyze_with_net(an_ckpt, [&](net::Network<float>& n) {
                const auto dir = an_direction == "backward" ? analysis::Direction::backward
                                                            : analysis::Direction::forward;
                analysis::SpikeStats stats;
                const analysis::SpikeStats* stats_ptr = nullptr;
                if (!an_input.empty()) {
                    stats = analysis::measure_spike_stats(n, io::load_slices_file(an_input));
                    stats_ptr = &stats;
                }
                emit(analysis::estimate_ops(n, dir, stats_ptr).to_csv());
                return kExitOk;
            });
        if (*hist)
            return analyze_with_net(an_ckpt, [&](net::Network<float>& n) {
                const auto which = an_which == "feedforward" ? analysis::WeightClass::feedforward
                                                             : analysis::WeightClass::recurrent;
                emit(analysis::weight_histogram(n, which, an_bins).to_csv());
                return kExitOk;
            });
        if (*feat)
            return analyze_with_net(an_ckpt, [&](net::Network<float>& n) {
                fs::create_directories(an_dir);
                const std::string manifest = analysis::export_feature_maps(
                    n, io::load_slices_file(an_input), an_layer, an_dir);
                std::cout << "wrote " << manifest << "\n";
                return kExitOk;
            });
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == Errc::usage ? kExitUsage
                                       : (e.code() == Errc::check_failed ? kExitCheck : kExitData);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
