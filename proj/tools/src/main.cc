#include <iostream>

#include "racdnn_cli/commands.h"

int main(int argc, char** argv) { return racdnn::cli::run(argc, argv, std::cout, std::cerr); }
