#include "ajm/cli.hpp"

int main(int argc, char** argv) { return ajm::cli_main(argc, argv); }
