#include "propeval/cli.hpp"

int main(int argc, char** argv) { return propeval::cli::run(argc, argv); }
