#include "ecodrive/cli.hpp"

int main(int argc, char** argv) { return ecodrive::cli::run_command(argc, argv); }
