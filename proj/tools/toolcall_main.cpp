#include "toolcall/cli.hpp"

int main(int argc, char** argv) { return toolcall::cli::run(argc, argv); }
