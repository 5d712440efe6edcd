#include "../src/cli/cli_common.hpp"

int main(int argc, char** argv) { return sarc::cli::run_main(argc, argv); }
