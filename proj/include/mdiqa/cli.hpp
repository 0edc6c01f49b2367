#pragma once

namespace mdiqa {

/// Exit codes of the mdiqa binary.
enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitConfig = 2,
    kExitIo = 3,
    kExitNumeric = 4,
    kExitGradCheck = 5,
};

int run_cli(int argc, char** argv);

} // namespace mdiqa
