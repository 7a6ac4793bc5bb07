#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "advlab/config.hpp"

namespace advlab {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    std::string stage;
    NumericError(const std::string& stage_name, const std::string& what_msg)
        : std::runtime_error("stage " + stage_name + ": " + what_msg), stage(stage_name) {}
};

struct StageTiming {
    std::string name;
    double seconds = 0.0;
    bool resumed = false;
};

struct RunReport {
    std::string command;
    std::vector<StageTiming> stages;
    std::map<std::string, std::string> checksums;  // artifact relative path -> fnv1a64 hex
    std::string json;                              // rendered report.json body
};

struct RunOptions {
    std::string resume_stage;  // recompute from this stage onward; earlier stages load from disk
    int jobs = 0;              // >0: worker threads for batched linear algebra
    bool quiet = false;        // suppress per-stage progress lines
};

// Subcommands: train, attack, distill, analyze, pipeline, report. Each runs a
// checkpointed prefix of the full pipeline (report only loads). Returns the
// process exit code: 0 ok, 1 config error, 2 numeric failure, 3 I/O error.
int run_command(const std::string& command, const ExperimentConfig& config, const RunOptions& options = {},
                RunReport* out_report = nullptr);

std::uint64_t file_checksum(const std::string& path);
std::string checksum_hex(std::uint64_t h);

}  // namespace advlab
