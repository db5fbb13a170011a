#include "cglo/cli.hpp"

int main(int argc, char** argv) { return cglo::cli::run(argc, argv); }
