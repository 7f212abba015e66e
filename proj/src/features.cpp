#include "ppsvm/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ppsvm/vecmath.hpp"

namespace fs = std::filesystem;

namespace ppsvm {

namespace {

// Token scanner for the PGM header (and P2 payload): skips whitespace and
// '#' comments that run to end of line.
struct PgmScanner {
  std::string_view s;
  std::size_t pos = 0;

  void skip_separators() {
    while (pos < s.size()) {
      const char c = s[pos];
      if (c == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::uint32_t next_uint(const char* what) {
    skip_separators();
    if (pos >= s.size()) throw TruncatedData(std::string("missing ") + what);
    if (!std::isdigit(static_cast<unsigned char>(s[pos])))
      throw MalformedHeader(std::string("expected number for ") + what);
    std::uint64_t v = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      v = v * 10 + static_cast<std::uint64_t>(s[pos] - '0');
      if (v > 0xffffffffULL) throw MalformedHeader(std::string(what) + " out of range");
      ++pos;
    }
    return static_cast<std::uint32_t>(v);
  }
};

}  // namespace

GrayImage load_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5'))
    throw MalformedHeader("not a P2/P5 PGM stream");
  const bool binary = bytes[1] == '5';

  PgmScanner sc{bytes, 2};
  const std::uint32_t width = sc.next_uint("width");
  const std::uint32_t height = sc.next_uint("height");
  const std::uint32_t maxval = sc.next_uint("maxval");
  if (width == 0 || height == 0) throw MalformedHeader("zero image dimension");
  if (maxval == 0 || maxval > 65535) throw MalformedHeader("maxval out of range");

  GrayImage img;
  img.width = width;
  img.height = height;
  img.maxval = static_cast<std::uint16_t>(maxval);
  const std::size_t n = static_cast<std::size_t>(width) * height;
  img.pixels.resize(n);

  if (binary) {
    if (sc.pos >= bytes.size()) throw TruncatedData("missing payload");
    ++sc.pos;  // single whitespace byte after maxval
    const std::size_t bpp = maxval < 256 ? 1 : 2;
    if (bytes.size() - sc.pos < n * bpp)
      throw TruncatedData("payload shorter than width*height samples");
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + sc.pos;
    for (std::size_t i = 0; i < n; ++i) {
      std::uint16_t v;
      if (bpp == 1) {
        v = p[i];
      } else {
        v = static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
      }
      if (v > maxval) throw MalformedHeader("sample exceeds maxval");
      img.pixels[i] = v;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t v = sc.next_uint("pixel");
      if (v > maxval) throw MalformedHeader("sample exceeds maxval");
      img.pixels[i] = static_cast<std::uint16_t>(v);
    }
  }
  return img;
}

GrayImage load_pgm_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_pgm(buf.str());
}

Template downsample(const GrayImage& img, const BlockSpec& spec, bool normalize) {
  if (img.width == 0 || img.height == 0 || img.pixels.empty())
    throw EmptyImage("cannot downsample an empty image");
  if (spec.block_h < 1 || spec.block_w < 1)
    throw DimensionMismatch("block dimensions must be >= 1");

  const std::size_t rows = (img.height + spec.block_h - 1) / spec.block_h;
  const std::size_t cols = (img.width + spec.block_w - 1) / spec.block_w;
  const double scale = 1.0 / static_cast<double>(img.maxval);

  Template t;
  t.values.reserve(rows * cols);
  for (std::size_t br = 0; br < rows; ++br) {
    const std::size_t r0 = br * spec.block_h;
    const std::size_t r1 = std::min(r0 + spec.block_h, img.height);
    for (std::size_t bc = 0; bc < cols; ++bc) {
      const std::size_t c0 = bc * spec.block_w;
      const std::size_t c1 = std::min(c0 + spec.block_w, img.width);
      double sum = 0.0;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c)
          sum += static_cast<double>(img.pixels[r * img.width + c]);
      t.values.push_back(sum * scale / static_cast<double>((r1 - r0) * (c1 - c0)));
    }
  }

  if (normalize) {
    const double norm = l2_norm(t.values);
    if (norm > 0.0)
      for (auto& v : t.values) v /= norm;
  }
  return t;
}

std::vector<Template> extract_dataset(const fs::path& root, const BlockSpec& spec,
                                      bool normalize) {
  if (!fs::is_directory(root))
    throw IoError("dataset root is not a directory: " + root.string());

  std::vector<fs::path> clients;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) clients.push_back(e.path());
  std::sort(clients.begin(), clients.end(),
            [](const fs::path& a, const fs::path& b) {
              return a.filename().string() < b.filename().string();
            });

  std::vector<Template> out;
  for (const auto& dir : clients) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".pgm")
        files.push_back(e.path());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) {
                return a.filename().string() < b.filename().string();
              });
    for (const auto& f : files) {
      try {
        Template t = downsample(load_pgm_file(f), spec, normalize);
        t.client_id = dir.filename().string();
        t.sample_id = f.stem().string();
        out.push_back(std::move(t));
      } catch (const MalformedHeader& e) {
        throw MalformedHeader(f.string() + ": " + e.what());
      } catch (const TruncatedData& e) {
        throw TruncatedData(f.string() + ": " + e.what());
      }
    }
  }
  return out;
}

}  // namespace ppsvm
