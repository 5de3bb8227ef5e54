// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the `lrc` executable.
//
// Every command reads one flat RunConfig (JSON object). Unknown keys are
// rejected. Relative paths resolve against the working directory. All
// randomness derives from `seed` through derive_seed(seed, purpose) with
// purposes "calibration", "split" and "init".
//
// Outputs are written into `output_dir`, which is held under an exclusive
// lock file (.lrc.lock) for the duration of the command.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lrc/bundle.hpp"
#include "lrc/decompose.hpp"
#include "lrc/eval.hpp"
#include "lrc/model.hpp"

namespace lrc {

enum class Strategy { constant, search, replay };

std::string_view strategy_name(Strategy s);
// Throws ConfigError.
Strategy parse_strategy(std::string_view name);

struct RunConfig {
    std::filesystem::path bundle;          // input model
    std::filesystem::path compare_bundle;  // eval: optional second model
    std::filesystem::path gram_bank;       // calibrate: output; compress: input
    std::filesystem::path plan;            // compress replay / report input
    std::filesystem::path output_dir = ".";
    std::vector<std::filesystem::path> calib_text;
    std::vector<std::filesystem::path> calib_tasks; // only their search part is used
    std::vector<std::filesystem::path> tasks;
    std::vector<std::filesystem::path> eval_text;

    DecompositionMode mode = DecompositionMode::feature;
    // Unset: on in feature mode. Weight mode with true is a ConfigError.
    std::optional<bool> bias_compensation;
    std::optional<uint64_t> seed;
    std::size_t samples = 512;
    std::size_t max_len = 128;

    Strategy strategy = Strategy::constant;
    double beta = 0.5;
    std::size_t last_modules = 0; // 0: every module
    std::vector<double> beta_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    MetricKind metric = MetricKind::accuracy;
    double tau = 0.0;
    bool refresh_every_module = false;
    bool length_normalize = true;
    std::optional<DType> dtype; // output precision; unset keeps the input's

    // init / synth
    nlohmann::json model = nlohmann::json::object(); // ModelConfig field overrides
    double spectral_decay = 0.0;
    std::size_t synth_documents = 200;
    std::size_t synth_items = 100;
    std::size_t synth_choices = 4;

    // Throws ConfigError on unknown keys or mistyped values.
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    // Throws ConfigError when no seed is set.
    uint64_t require_seed() const;
    // Throws ConfigError for inconsistent settings.
    void validate() const;
};

// Reads `path` (if non-empty), then applies each "key=value" override. The
// key may be dotted to reach nested objects (model.d_model=32). The value is
// parsed as JSON when possible and taken as a plain string otherwise.
nlohmann::json merge_overrides(nlohmann::json base, const std::vector<std::string>& overrides);
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

struct CommandResult {
    std::vector<std::filesystem::path> outputs;
    nlohmann::json summary = nlohmann::json::object();
};

// Builds and saves the gram bank (one accumulator per linear layer).
CommandResult cmd_calibrate(const RunConfig& config);
// Writes compressed.lrcb, plan.json, budget.csv and summary.json.
CommandResult cmd_compress(const RunConfig& config);
// Scores the eval part of every task / text file; writes eval.json, eval.csv.
CommandResult cmd_eval(const RunConfig& config);
// Parameter, MAC and per-layer budget report for a plan on a bundle;
// writes report.json and budget.csv.
CommandResult cmd_report(const RunConfig& config);
// Seeded random model bundle at output_dir/model.lrcb.
CommandResult cmd_init(const RunConfig& config);
// Seeded synthetic corpus.txt and tasks.jsonl in output_dir.
CommandResult cmd_synth(const RunConfig& config);

} // namespace lrc
