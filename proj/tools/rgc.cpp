#include "rgc/cli/cli.hpp"

int main(int argc, char** argv) { return rgc::cli::run(argc, argv); }
