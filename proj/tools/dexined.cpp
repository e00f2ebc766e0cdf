#include "dexined/cli.hpp"

int main(int argc, char** argv) { return dexined::cli::main(argc, argv); }
