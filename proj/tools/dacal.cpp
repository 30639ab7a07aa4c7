#include "cli/commands.hpp"

int main(int argc, char** argv) { return dacal::cli::run(argc, argv); }
