#include "c2lab/commands.hpp"

int main(int argc, char** argv) { return c2lab::cli::main_entry(argc, argv); }
