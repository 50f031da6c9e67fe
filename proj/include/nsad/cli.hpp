#pragma once

// nsad command-line entry point.
//
//   nsad check-rules --rules R --schema S
//   nsad simulate    [--spec J] --seed N --out DIR
//   nsad pretrain    --schema S --records C --out CKPT [--seed N] [--hidden 32,16]
//   nsad train       --schema S --records C --rules R --checkpoint STAGE1 --out CKPT [--freeze-w]
//   nsad eval        --schema S --records C [--rules R] --checkpoint CKPT...   evaluate given checkpoints
//   nsad eval        --schema S --records C --rules R --seeds N [--seed S0]    full two-stage protocol per seed
//   nsad diagnose    --schema S --records C --rules R --checkpoint STAGE2 --out DIR <patient-id>
//
// Every command also takes --config FILE with flat `key = value` lines; keys
// are the long flag names (dashes or underscores) and flags win over the file.
//
// Exit codes: 0 success, 1 domain error, 2 I/O or configuration error.

#include <iosfwd>
#include <string>
#include <vector>

namespace nsad {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitIo = 2;

int run_cli(int argc, char** argv);

// Same as above with explicit streams; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nsad
