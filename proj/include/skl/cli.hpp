#pragma once

namespace skl {

// Full command-line surface (gen-data / pretrain / finetune / eval / bench).
// Returns the process exit code: 0 success, 1 usage or validation error,
// 2 I/O error, 3 numeric contract violation.
int run_cli(int argc, const char* const* argv);

}  // namespace skl
