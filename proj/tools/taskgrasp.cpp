#include <iostream>

#include "taskgrasp/cli.hpp"

int main(int argc, char** argv) { return taskgrasp::run_cli(argc, argv, std::cout, std::cerr); }
