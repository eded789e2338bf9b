#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qmri::cli {

inline constexpr const char* kVersion = "qmri 0.1.0";

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kIo = 3;
inline constexpr int kNumeric = 4;

// Runs one invocation. args excludes the program name. Errors are reported
// on `err` as a single line: "qmri: error[<kind>]: <message>".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// 8-bit binary PGM, lo -> 0 and hi -> 255, clamped.
std::string encode_pgm(const std::vector<double>& pixels, std::size_t h, std::size_t w, double lo, double hi);

}  // namespace qmri::cli
