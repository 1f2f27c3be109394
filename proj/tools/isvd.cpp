#include "cli.hpp"

int main(int argc, char** argv) { return isvd::cli::run(argc, argv); }
