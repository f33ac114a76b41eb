#ifndef WHISPERLINE_CLI_HPP
#define WHISPERLINE_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace whisperline {

// Command line surface: synth | extract | train | eval | noise | inspect |
// preset. Returns the process exit code: 0 success, 1 usage error, 2
// data/format error. Output streams are injectable for tests.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace whisperline

#endif  // WHISPERLINE_CLI_HPP
