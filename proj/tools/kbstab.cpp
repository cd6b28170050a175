#include "kbstab/cli.hpp"

int main(int argc, char** argv) { return kbstab::cli::run(argc, argv); }
