// Synthetic dataset generator for CI and offline testing: writes event
// recordings in the real container layouts (5-byte digit records, AEDAT 3.1
// gesture trials) so the normal prepare/train/eval pipeline runs on them.

#include <CLI11.hpp>
#include <iostream>

#include "nvsnn/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic event-stream dataset generator"};
    std::string kind = "digits", out_dir;
    std::size_t n_train = 64, n_test = 16;
    std::uint64_t seed = 1, duration_ms = 0;
    app.add_option("--kind", kind, "digits | gesture")->required();
    app.add_option("--out", out_dir, "output dataset root")->required();
    app.add_option("--train", n_train, "training recordings");
    app.add_option("--test", n_test, "test recordings");
    app.add_option("--seed", seed);
    app.add_option("--duration-ms", duration_ms, "recording length (default: per-kind)");
    CLI11_PARSE(app, argc, argv);

    try {
        if (kind == "digits") {
            nvsnn::synth::DigitsParams p;
            if (duration_ms) p.duration_us = duration_ms * 1000;
            nvsnn::synth::write_digits_dataset(out_dir, n_train, n_test, seed, p);
        } else if (kind == "gesture") {
            nvsnn::synth::GestureParams p;
            if (duration_ms) p.duration_us = duration_ms * 1000;
            nvsnn::synth::write_gesture_dataset(out_dir, n_train, n_test, seed, p);
        } else {
            std::cerr << "unknown kind: " << kind << "\n";
            return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cout << "wrote " << n_train << " train / " << n_test << " test recordings under "
              << out_dir << "\n";
    return 0;
}
