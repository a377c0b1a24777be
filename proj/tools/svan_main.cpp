#include "svan/cli.hpp"

int main(int argc, char** argv) { return svan::cli::run(argc, argv); }
