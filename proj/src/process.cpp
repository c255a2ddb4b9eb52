// SPDX-License-Identifier: Apache-2.0
#include <agentml/process.hpp>
#include <agentml/synthetic.hpp>

#include <fmt/format.h>

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace agentml
{

namespace
{
    using Clock = std::chrono::steady_clock;

    struct Pipe
    {
        int fds[2] { -1, -1 };
        ~Pipe()
        {
            for (int fd: fds)
                if (fd >= 0)
                    ::close(fd);
        }
        void close(int i)
        {
            if (fds[i] >= 0)
                ::close(fds[i]);
            fds[i] = -1;
        }
    };
} // namespace

ProcessResult ProcessRunner::run(const std::vector<std::string>& argv, const fs::path& cwd, Seconds timeout) const
{
    if (argv.empty())
        throw Error(ErrorCode::InvalidArgument, "empty argv");

    Pipe pipe;
    if (::pipe2(pipe.fds, O_CLOEXEC) != 0)
        throw Error(ErrorCode::IoFailure, fmt::format("pipe: {}", std::strerror(errno)));

    std::vector<char*> args;
    for (auto const& a: argv)
        args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    auto const dir = cwd.string();

    auto const start = Clock::now();
    pid_t const pid = ::fork();
    if (pid < 0)
        throw Error(ErrorCode::IoFailure, fmt::format("fork: {}", std::strerror(errno)));
    if (pid == 0)
    {
        ::setpgid(0, 0);
        ::dup2(pipe.fds[1], STDOUT_FILENO);
        ::dup2(pipe.fds[1], STDERR_FILENO);
        int const devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0)
            ::dup2(devnull, STDIN_FILENO);
        if (::chdir(dir.c_str()) != 0)
            ::_exit(126);
        ::execvp(args[0], args.data());
        auto const msg = fmt::format("exec {} failed: {}\n", argv[0], std::strerror(errno));
        [[maybe_unused]] auto const w = ::write(STDOUT_FILENO, msg.data(), msg.size());
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    pipe.close(1);

    ProcessResult result;
    bool truncated = false;
    auto const deadline = start + std::chrono::duration_cast<Clock::duration>(timeout);
    char buffer[8192];
    for (;;)
    {
        auto const remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
        if (remaining <= 0)
        {
            result.status.timed_out = true;
            break;
        }
        pollfd pfd { pipe.fds[0], POLLIN, 0 };
        int const ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 1000)));
        if (ready < 0 && errno != EINTR)
            break;
        if (ready <= 0)
            continue;
        auto const n = ::read(pipe.fds[0], buffer, sizeof buffer);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            break; // EOF: every writer in the group is gone
        auto const room = _maxOutput - std::min(_maxOutput, result.output.size());
        result.output.append(buffer, std::min<std::size_t>(room, static_cast<std::size_t>(n)));
        truncated = truncated || static_cast<std::size_t>(n) > room;
    }

    if (result.status.timed_out)
        ::killpg(pid, SIGKILL);
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR)
    {
    }
    if (result.status.timed_out)
        result.status.code = -SIGKILL;
    else if (WIFEXITED(status))
        result.status.code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status))
        result.status.code = 128 + WTERMSIG(status);
    // Grandchildren may outlive the child; do not leave them running.
    ::killpg(pid, SIGKILL);

    if (truncated)
        result.output += fmt::format("\n[output truncated at {} bytes]\n", _maxOutput);
    result.elapsed = Clock::now() - start;
    return result;
}

ScriptRunner::ScriptRunner(std::string interpreter, bool in_process):
    _interpreter(std::move(interpreter)), _inProcess(in_process)
{
}

ProcessResult ScriptRunner::run(const fs::path& script, const fs::path& cwd, Seconds timeout) const
{
    if (_inProcess)
    {
        std::string source;
        try
        {
            source = read_file((cwd / script).string());
        }
        catch (const Error&)
        {
            source.clear();
        }
        if (auto run = simulate_synthetic_script(source))
        {
            ProcessResult result;
            result.status.code = run->exit_code;
            result.output = std::move(run->output);
            return result;
        }
    }
    return _process.run({ _interpreter, script.string() }, cwd, timeout);
}

} // namespace agentml
