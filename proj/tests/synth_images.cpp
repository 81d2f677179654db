// Writes members of a striped texture family as 16-bit PGM files.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "oracles/oracles.hpp"
#include "texsr/io.hpp"

int main(int argc, char** argv) {
  if (argc != 7) {
    std::cerr << "usage: synth_images OUT_DIR PREFIX FAMILY FIRST_MEMBER COUNT SIZE\n";
    return 1;
  }
  const std::filesystem::path dir = argv[1];
  const std::string prefix = argv[2];
  const auto family = std::strtoull(argv[3], nullptr, 10);
  const auto first = std::strtoull(argv[4], nullptr, 10);
  const int count = std::atoi(argv[5]);
  const int size = std::atoi(argv[6]);
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    const auto img = texsr::oracle::striped_family(size, size, family, first + static_cast<std::uint64_t>(i));
    texsr::save_image(img, dir / (prefix + std::to_string(i) + ".pgm"), texsr::PgmDepth::u16);
  }
  return 0;
}
