#include <iostream>

#include "kandu/cli.hpp"

int main(int argc, char** argv) { return kandu::cli::run(argc, argv, std::cout, std::cerr); }
