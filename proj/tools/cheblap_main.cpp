#include "commands.hpp"

int main(int argc, char** argv) { return cheblap::cli::run(argc, argv); }
