#include <cmath>
#include <fstream>
#include <sstream>

#include "urbanflow/imaging.hpp"

namespace urbanflow {
namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  while (true) {
    const int ch = in.get();
    if (ch == EOF) break;
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
      if (!token.empty()) break;
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

int parse_positive(const std::string& token, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used == token.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Io, std::string("pgm: bad ") + what);
}

}  // namespace

ImageBuffer read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "pgm: cannot open " + path.string());
  if (next_token(in) != "P5") fail(ErrorKind::Io, "pgm: not a binary P5 file: " + path.string());
  const int width = parse_positive(next_token(in), "width");
  const int height = parse_positive(next_token(in), "height");
  const int maxval = parse_positive(next_token(in), "maxval");
  if (maxval > 255) fail(ErrorKind::Io, "pgm: only 8-bit files are supported");
  std::string raw(static_cast<std::size_t>(width) * height, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    fail(ErrorKind::Io, "pgm: truncated pixel data in " + path.string());
  }
  ImageBuffer img(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const auto byte = static_cast<unsigned char>(raw[static_cast<std::size_t>(r) * width + c]);
      img(r, c) = std::min(1.0, static_cast<double>(byte) / maxval);
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const ImageBuffer& img,
               const std::vector<std::string>& comments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "pgm: cannot write " + path.string());
  out << "P5\n";
  for (const auto& line : comments) out << "# " << line << "\n";
  out << img.cols() << " " << img.rows() << "\n255\n";
  std::string raw(static_cast<std::size_t>(img.size()), '\0');
  for (Eigen::Index r = 0; r < img.rows(); ++r) {
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      const double v = std::clamp(img(r, c), 0.0, 1.0);
      raw[static_cast<std::size_t>(r * img.cols() + c)] =
          static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  }
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
}

}  // namespace urbanflow
