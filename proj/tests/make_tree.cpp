// Writes a small synthetic DRIVE tree at the given path (for script tests).

#include <iostream>

#include "support.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_tree <root>\n";
    return 2;
  }
  testing::write_dataset_tree(argv[1], vessel::DatasetId::Drive, 24, 20);
  return 0;
}
