#include "subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>

extern char** environ;

namespace skillprobe::sandbox {

namespace {

const char* const kEnvAllowlist[] = {"PATH", "HOME", "LANG", "LC_ALL", "TZ"};

std::vector<std::string> build_env(bool scrub) {
    std::vector<std::string> env;
    if (scrub) {
        for (const char* name : kEnvAllowlist) {
            if (const char* value = std::getenv(name)) {
                env.push_back(std::string(name) + "=" + value);
            }
        }
    } else {
        for (char** e = environ; *e != nullptr; ++e) {
            env.emplace_back(*e);
        }
    }
    env.emplace_back("PYTHONDONTWRITEBYTECODE=1");
    return env;
}

} // namespace

SubprocessResult run_subprocess(const std::vector<std::string>& argv,
                                const std::filesystem::path& cwd, double timeout_s,
                                std::size_t output_cap, bool env_scrub,
                                const std::string& stdin_data) {
    SubprocessResult result;
    if (argv.empty()) {
        result.launch_failed = true;
        result.launch_error = "empty argv";
        return result;
    }

    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0 || pipe(err_pipe) != 0) {
        result.launch_failed = true;
        result.launch_error = std::strerror(errno);
        return result;
    }

    std::vector<std::string> env = build_env(env_scrub);

    pid_t pid = fork();
    if (pid < 0) {
        result.launch_failed = true;
        result.launch_error = std::strerror(errno);
        return result;
    }

    if (pid == 0) {
        // child
        setpgid(0, 0);
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        close(err_pipe[0]);
        close(err_pipe[1]);
        if (chdir(cwd.c_str()) != 0) _exit(126);

        std::vector<char*> cargv;
        cargv.reserve(argv.size() + 1);
        for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
        cargv.push_back(nullptr);
        std::vector<char*> cenv;
        cenv.reserve(env.size() + 1);
        for (const auto& e : env) cenv.push_back(const_cast<char*>(e.c_str()));
        cenv.push_back(nullptr);

        execvpe(cargv[0], cargv.data(), cenv.data());
        _exit(127);
    }

    // parent
    close(in_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[1]);
    signal(SIGPIPE, SIG_IGN);

    fcntl(in_pipe[1], F_SETFL, O_NONBLOCK);
    fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);
    fcntl(err_pipe[0], F_SETFL, O_NONBLOCK);

    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                        std::chrono::duration<double>(timeout_s));

    std::size_t stdin_written = 0;
    bool stdin_open = true;
    bool stdout_open = true;
    bool stderr_open = true;
    if (stdin_data.empty()) {
        close(in_pipe[1]);
        stdin_open = false;
    }

    char buf[4096];
    while (stdout_open || stderr_open || stdin_open) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            kill(-pid, SIGKILL);
            break;
        }
        int wait_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
        if (wait_ms > 200) wait_ms = 200;
        if (wait_ms < 1) wait_ms = 1;

        struct pollfd fds[3];
        int nfds = 0;
        int out_idx = -1, err_idx = -1, in_idx = -1;
        if (stdout_open) {
            out_idx = nfds;
            fds[nfds++] = {out_pipe[0], POLLIN, 0};
        }
        if (stderr_open) {
            err_idx = nfds;
            fds[nfds++] = {err_pipe[0], POLLIN, 0};
        }
        if (stdin_open) {
            in_idx = nfds;
            fds[nfds++] = {in_pipe[1], POLLOUT, 0};
        }
        int rc = poll(fds, static_cast<nfds_t>(nfds), wait_ms);
        if (rc < 0 && errno != EINTR) break;
        if (rc <= 0) continue;

        auto drain = [&](int fd, std::string& sink, bool& open_flag) {
            ssize_t n = read(fd, buf, sizeof buf);
            if (n > 0) {
                std::size_t room = sink.size() < output_cap ? output_cap - sink.size() : 0;
                if (room > 0) {
                    sink.append(buf, buf + std::min<std::size_t>(static_cast<std::size_t>(n), room));
                }
                if (static_cast<std::size_t>(n) > room) result.truncated = true;
            } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
                close(fd);
                open_flag = false;
            }
        };

        if (out_idx >= 0 && (fds[out_idx].revents & (POLLIN | POLLHUP))) {
            drain(out_pipe[0], result.stdout_data, stdout_open);
        }
        if (err_idx >= 0 && (fds[err_idx].revents & (POLLIN | POLLHUP))) {
            drain(err_pipe[0], result.stderr_data, stderr_open);
        }
        if (in_idx >= 0 && (fds[in_idx].revents & (POLLOUT | POLLERR | POLLHUP))) {
            if (fds[in_idx].revents & (POLLERR | POLLHUP)) {
                close(in_pipe[1]);
                stdin_open = false;
            } else {
                ssize_t n = write(in_pipe[1], stdin_data.data() + stdin_written,
                                  stdin_data.size() - stdin_written);
                if (n > 0) stdin_written += static_cast<std::size_t>(n);
                if (stdin_written >= stdin_data.size() || (n < 0 && errno != EAGAIN)) {
                    close(in_pipe[1]);
                    stdin_open = false;
                }
            }
        }
    }

    if (stdout_open) close(out_pipe[0]);
    if (stderr_open) close(err_pipe[0]);
    if (stdin_open) close(in_pipe[1]);

    int status = 0;
    if (result.timed_out) {
        waitpid(pid, &status, 0);
        result.exit_code = -1;
    } else {
        waitpid(pid, &status, 0);
        if (WIFEXITED(status)) {
            result.exit_code = WEXITSTATUS(status);
        } else if (WIFSIGNALED(status)) {
            result.exit_code = 128 + WTERMSIG(status);
        }
    }
    return result;
}

} // namespace skillprobe::sandbox
