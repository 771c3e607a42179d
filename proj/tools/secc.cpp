#include "secc/errors.hpp"
#include "secc/experiment.hpp"
#include "secc/textio.hpp"

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

namespace {

void usage() {
    std::cout << "usage:\n"
              << "  secc run <config>     [--out <dir>] [--seeds a,b,c]\n"
              << "  secc ablate <config>  [--out <dir>] [--seeds a,b,c]\n"
              << "  secc plot <history.csv> <projection.csv> [--out <dir>]\n";
}

struct Options {
    std::vector<std::string> positional;
    std::string out;
    std::string seeds;
};

Options parse_args(int argc, char** argv) {
    Options opt;
    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--out") {
            if (++i >= argc) throw secc::ConfigError("--out", "--out needs a directory argument");
            opt.out = argv[i];
        } else if (arg == "--seeds") {
            if (++i >= argc) throw secc::ConfigError("--seeds", "--seeds needs a list argument");
            opt.seeds = argv[i];
        } else {
            opt.positional.push_back(arg);
        }
    }
    return opt;
}

void apply_overrides(secc::ExperimentConfig& cfg, const Options& opt) {
    if (!opt.out.empty()) cfg.out_dir = opt.out;
    if (!opt.seeds.empty()) {
        cfg.seeds.clear();
        for (const std::string& part : secc::split(opt.seeds, ',')) {
            cfg.seeds.push_back(static_cast<std::uint64_t>(secc::parse_long(part, "--seeds")));
        }
    }
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        usage();
        return 2;
    }
    const std::string command = argv[1];
    try {
        const Options opt = parse_args(argc, argv);
        if (command == "run" || command == "ablate") {
            if (opt.positional.size() != 1) {
                usage();
                return 2;
            }
            secc::ExperimentConfig cfg = secc::load_experiment_config(opt.positional[0]);
            apply_overrides(cfg, opt);
            const std::string dir =
                command == "run" ? secc::run_experiment(cfg) : secc::run_ablation(cfg);
            std::cout << "artifacts written to " << dir << "\n";
            return 0;
        }
        if (command == "plot") {
            if (opt.positional.size() != 2) {
                usage();
                return 2;
            }
            secc::render_plots(opt.positional[0], opt.positional[1],
                               opt.out.empty() ? "." : opt.out);
            return 0;
        }
        usage();
        return 2;
    } catch (const secc::ConfigError& e) {
        std::cerr << "config error (" << e.field << "): " << e.what() << "\n";
        return 2;
    } catch (const secc::TrainAbortError& e) {
        std::cerr << "training aborted: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
