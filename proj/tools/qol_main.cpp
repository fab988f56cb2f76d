#include "qol/cli.hpp"

int main(int argc, char** argv) { return qol::cli::run(argc, argv); }
