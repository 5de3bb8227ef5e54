// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0
//
// lrc: low-rank compression of decoder language models.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numerical failure, 1 anything else.

#include <exception>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lrc/errors.hpp"
#include "lrc/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct CommandArgs {
    std::string config;
    std::vector<std::string> overrides;
};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help, CommandArgs& args) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", args.config, "Run config (JSON object)");
    sub->add_option("--set", args.overrides, "Field override key=value (repeatable)")->take_all();
    return sub;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-rank compression of decoder language models"};
    app.require_subcommand(1);

    struct Entry {
        CLI::App* sub;
        CommandArgs args;
        std::function<lrc::CommandResult(const lrc::RunConfig&)> run;
    };
    std::vector<Entry> commands(6);
    commands[0].run = lrc::cmd_calibrate;
    commands[1].run = lrc::cmd_compress;
    commands[2].run = lrc::cmd_eval;
    commands[3].run = lrc::cmd_report;
    commands[4].run = lrc::cmd_init;
    commands[5].run = lrc::cmd_synth;
    commands[0].sub = add_command(app, "calibrate", "Accumulate per-layer output Gram matrices", commands[0].args);
    commands[1].sub = add_command(app, "compress", "Factor linear layers (constant, search or replay)",
                                  commands[1].args);
    commands[2].sub = add_command(app, "eval", "Score one or two bundles on held-out data", commands[2].args);
    commands[3].sub = add_command(app, "report", "Parameter and MAC accounting for a bundle or plan",
                                  commands[3].args);
    commands[4].sub = add_command(app, "init", "Write a seeded random model bundle", commands[4].args);
    commands[5].sub = add_command(app, "synth", "Write a seeded synthetic corpus and task file", commands[5].args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        for (const Entry& cmd : commands) {
            if (!cmd.sub->parsed()) {
                continue;
            }
            const lrc::RunConfig config = lrc::load_run_config(cmd.args.config, cmd.args.overrides);
            const lrc::CommandResult result = cmd.run(config);
            std::cout << result.summary.dump(2) << "\n";
        }
    } catch (const lrc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const lrc::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const lrc::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
