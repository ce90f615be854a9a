#include "clm/image_io.hpp"

#include <fstream>
#include <sstream>

namespace clm {

namespace {

int next_token(std::istream& in) {
    // skips whitespace and '#' comments per the PNM grammar
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    if (!(in >> v)) throw std::runtime_error("malformed PNM header");
    return v;
}

}  // namespace

jpeg::Raster read_pnm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open image: " + path.string());
    std::string magic;
    f >> magic;
    int channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw std::runtime_error("unsupported PNM magic: " + magic);

    jpeg::Raster r;
    r.channels = channels;
    r.width = next_token(f);
    r.height = next_token(f);
    int maxval = next_token(f);
    if (maxval != 255) throw std::runtime_error("only 8-bit PNM supported");
    f.get();  // single whitespace before payload
    r.samples.resize(static_cast<std::size_t>(r.width) * r.height * channels);
    f.read(reinterpret_cast<char*>(r.samples.data()), static_cast<std::streamsize>(r.samples.size()));
    if (static_cast<std::size_t>(f.gcount()) != r.samples.size())
        throw std::runtime_error("truncated PNM payload");
    return r;
}

void write_pnm(const std::filesystem::path& path, const jpeg::Raster& raster) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write image: " + path.string());
    f << (raster.channels == 1 ? "P5" : "P6") << "\n"
      << raster.width << " " << raster.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(raster.samples.data()),
            static_cast<std::streamsize>(raster.samples.size()));
}

}  // namespace clm
