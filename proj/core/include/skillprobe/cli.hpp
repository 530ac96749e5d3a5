#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace skillprobe::cli {

// Entry point behind the skillprobe executable. `args` excludes argv[0].
// Exit contract: 0 clean, 1 findings or exploits present, 2 usage or config
// error, 3 runtime failure (store corruption, provider/transcript failures).
[[nodiscard]] int dispatch(const std::vector<std::string>& args, std::ostream& out,
                           std::ostream& err);

} // namespace skillprobe::cli
