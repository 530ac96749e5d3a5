#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skillprobe::util {

// SHA-256 of the given bytes as lowercase hex.
[[nodiscard]] std::string sha256_hex(std::string_view data);

[[nodiscard]] std::string to_lower(std::string s);
[[nodiscard]] bool contains_ci(std::string_view haystack, std::string_view needle);
[[nodiscard]] std::string trim(std::string_view s);

// Splits on '\n'; a trailing newline does not produce an empty final element.
// '\r' before a split point is stripped.
[[nodiscard]] std::vector<std::string> split_lines(std::string_view text);

// Whitespace-separated tokens; empty pieces dropped.
[[nodiscard]] std::vector<std::string> split_ws(std::string_view text);

[[nodiscard]] std::string truncate(std::string_view s, std::size_t max_bytes);
void replace_all(std::string& s, std::string_view from, std::string_view to);
[[nodiscard]] std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Lowercase alphanumeric runs of at least min_len characters.
[[nodiscard]] std::vector<std::string> tokenize_words(std::string_view text, std::size_t min_len = 3);

[[nodiscard]] std::string read_text_file(const std::filesystem::path& file);
void write_text_file(const std::filesystem::path& file, std::string_view content);

[[nodiscard]] std::string now_iso8601();

[[nodiscard]] std::optional<std::string> getenv_str(const char* name);

struct ParsedUrl {
    std::string scheme;
    std::string host;
    int port = 0; // 0 when not explicit
    std::string path;
};

[[nodiscard]] std::optional<ParsedUrl> parse_url(std::string_view url);

} // namespace skillprobe::util
