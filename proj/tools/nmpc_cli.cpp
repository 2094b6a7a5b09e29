#include "flatmpc/harness.hpp"

int main(int argc, char** argv) { return flatmpc::cli_main(argc, argv); }
