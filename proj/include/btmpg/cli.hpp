#pragma once

namespace btmpg {

// Full command-line front end: train / generate / evaluate / ablate.
// Returns the process exit code. 0 = success, 1 = missing or inconsistent
// data (absent files, hash mismatches, misaligned corpora), 2 = bad usage
// (unknown config keys, invalid flag values).
int cli_main(int argc, char** argv);

}  // namespace btmpg
