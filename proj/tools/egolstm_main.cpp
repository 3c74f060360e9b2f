#include <iostream>

#include "egolstm/cli.hpp"

int main(int argc, char** argv) {
  egolstm::tune_allocator();
  return egolstm::run_cli(argc, argv, std::cout, std::cerr);
}
