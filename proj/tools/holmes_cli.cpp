#include "holmes/cli.hpp"

int main(int argc, char** argv) { return holmes::cli::run_main(argc, argv); }
