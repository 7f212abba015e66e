#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "ppsvm/errors.hpp"
#include "ppsvm/transform.hpp"

namespace ppsvm {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint16_t maxval = 255;
  std::vector<std::uint16_t> pixels;  // row-major
};

struct BlockSpec {
  std::size_t block_h = 1;
  std::size_t block_w = 1;
};

// Decodes ASCII (P2) or binary (P5) PGM. 16-bit binary samples are
// big-endian per the format.
GrayImage load_pgm(std::string_view bytes);
GrayImage load_pgm_file(const std::filesystem::path& path);

// Non-overlapping block means over intensities scaled to [0,1] by maxval,
// emitted in row-major block order. Boundary blocks average their actual
// extent. With normalize set the template is scaled to unit L2 norm
// (a zero image stays zero).
Template downsample(const GrayImage& img, const BlockSpec& spec,
                    bool normalize = true);

// Walks a directory-per-client tree of .pgm files. client_id is the
// subdirectory name, sample_id the file stem. Output is ordered by
// (client_id, file name), both lexicographic.
std::vector<Template> extract_dataset(const std::filesystem::path& root,
                                      const BlockSpec& spec,
                                      bool normalize = true);

}  // namespace ppsvm
