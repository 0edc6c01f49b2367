#include "mdiqa/cli.hpp"

int main(int argc, char** argv) { return mdiqa::run_cli(argc, argv); }
