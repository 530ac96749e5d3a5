#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace skillprobe::sandbox {

struct SubprocessResult {
    bool launch_failed = false;
    std::string launch_error;
    int exit_code = -1;
    bool timed_out = false;
    std::string stdout_data;
    std::string stderr_data;
    bool truncated = false;
};

// Runs argv in cwd with a wall-clock deadline and per-stream output caps.
// env_scrub replaces the child environment with a small allowlist (PATH,
// HOME, LANG, LC_ALL, TZ); PYTHONDONTWRITEBYTECODE is always set so scripted
// runs never shed .pyc files into the workspace. stdin_data is written to the
// child's stdin, which is then closed.
SubprocessResult run_subprocess(const std::vector<std::string>& argv,
                                const std::filesystem::path& cwd, double timeout_s,
                                std::size_t output_cap, bool env_scrub,
                                const std::string& stdin_data = "");

} // namespace skillprobe::sandbox
