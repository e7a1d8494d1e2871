#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

namespace cavprobe {

// End-to-end synthetic pipeline: generate -> split -> 100-replicate protocol
// -> debias sweep, with ground-truth checks at every stage. Returns true when
// every check passes. Writes the audit report to report_out when nonempty.
bool run_selftest(std::uint64_t seed, std::size_t threads, const std::filesystem::path& report_out,
                  bool include_timestamp, std::ostream& log);

}  // namespace cavprobe
