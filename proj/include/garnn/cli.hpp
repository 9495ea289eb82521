// Command-line front end: synth | train | eval | predict.
//
// Exit codes: 0 success, 1 input/output or data error, 2 usage or
// configuration error, 3 checkpoint does not match the data, 4 training
// stopped on a non-finite value (outputs are still written).

#pragma once

namespace garnn {

int run_cli(int argc, char** argv);

}  // namespace garnn
