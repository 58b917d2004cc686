#include "vrae/cli.hpp"

int main(int argc, char** argv) { return vrae::cli::main(argc, argv); }
