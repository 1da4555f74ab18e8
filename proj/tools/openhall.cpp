#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "openhall/config.hpp"
#include "openhall/runner.hpp"
#include "openhall/verify.hpp"

using namespace openhall;

int main(int argc, char** argv) {
    CLI::App app{"openhall: Hall response of open two-band systems"};
    app.set_version_flag("--version", std::string(kVersion));
    std::string command, config, out;
    int workers = 0;
    std::string suite = "all";
    app.add_option("command", command, "hall-point | hall-scan | cavity | kernel-check | verify")->required();
    app.add_option("--config", config, "configuration file");
    app.add_option("--out", out, "output root (overrides output.dir)");
    app.add_option("--workers", workers, "worker threads (overrides numerics.workers)")->check(CLI::Range(1, 1024));
    app.add_option("--suite", suite, "verify suite: all, core, models, hall, response, cavity");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        const Command cmd = parse_command(command);
        RunConfig cfg;
        if (!config.empty()) cfg = load_config_file(cmd, config);
        else if (cmd != Command::Verify) throw ConfigError("--config is required for " + command);
        else cfg = load_config(cmd, "");
        if (workers > 0) cfg.workers = workers;
        if (!out.empty()) cfg.out_dir = out;

        if (cmd == Command::Verify) {
            VerifyOptions vo;
            vo.suite = suite;
            vo.mutation = cfg.mutation;
            vo.workers = cfg.workers;
            const auto checks = run_verify(vo);
            const std::string report = verify_report(vo, checks);
            std::cout << report;
            if (!out.empty()) {
                std::filesystem::create_directories(out);
                std::ofstream(std::filesystem::path(out) / "verify.json") << report;
            }
            bool pass = !checks.empty();
            for (const auto& c : checks) {
                if (!c.pass) std::cerr << "FAIL " << c.suite << "/" << c.name << ": value " << c.value
                                       << " threshold " << c.threshold << " " << c.detail << "\n";
                pass = pass && c.pass;
            }
            return pass ? 0 : 3;
        }

        const RunOutcome oc = run(cfg);
        std::cout << oc.summary << "\n";
        return oc.exit_code;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ArgumentError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
}
