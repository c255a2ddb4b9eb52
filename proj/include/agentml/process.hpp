// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/task.hpp>

#include <string>
#include <vector>

namespace agentml
{

struct ExitStatus
{
    int code = 0;
    bool timed_out = false;
    bool operator==(const ExitStatus&) const = default;
};

struct ProcessResult
{
    ExitStatus status;
    std::string output; // stdout and stderr, interleaved as written
    Seconds elapsed { 0.0 };
};

/// Runs a child in its own process group with the working directory set, so
/// a timeout can kill the whole tree. Output beyond max_output bytes is
/// dropped with a note.
class ProcessRunner
{
  public:
    explicit ProcessRunner(std::size_t max_output = 1 << 20): _maxOutput(max_output) {}

    ProcessResult run(const std::vector<std::string>& argv, const fs::path& cwd, Seconds timeout) const;

  private:
    std::size_t _maxOutput;
};

/// Runs a workspace script. Scripts written by make_synthetic_task are
/// evaluated in-process (byte-identical to running them under python3);
/// anything else goes to the interpreter.
class ScriptRunner
{
  public:
    explicit ScriptRunner(std::string interpreter = "python3", bool in_process = true);

    ProcessResult run(const fs::path& script, const fs::path& cwd, Seconds timeout) const;

    [[nodiscard]] bool in_process() const { return _inProcess; }

  private:
    std::string _interpreter;
    bool _inProcess;
    ProcessRunner _process;
};

} // namespace agentml
