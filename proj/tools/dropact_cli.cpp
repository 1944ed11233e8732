#include "dropact/cli.hpp"

int main(int argc, char** argv) { return dropact::cli::run(argc, argv); }
