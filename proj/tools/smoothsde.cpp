#include "cli.hpp"

int main(int argc, char** argv) { return smoothsde::cli::run(argc, argv); }
