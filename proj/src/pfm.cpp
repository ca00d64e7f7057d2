#include "tofsplat/pfm.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace tofsplat {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("pfm: " + path + ": " + what);
}

// Skips whitespace/comments and reads one header token.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {  // comment to end of line
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (!isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = in.peek()) != EOF && !isspace(c)) tok.push_back(static_cast<char>(in.get()));
            return tok;
        }
    }
    return tok;
}

void byteswap4(unsigned char* p, size_t count) {
    for (size_t i = 0; i < count; ++i, p += 4) {
        std::swap(p[0], p[3]);
        std::swap(p[1], p[2]);
    }
}

bool host_is_little_endian() {
    const uint16_t one = 1;
    unsigned char b;
    std::memcpy(&b, &one, 1);
    return b == 1;
}

}  // namespace

void write_pfm(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        fail(path, "only 1- or 3-channel images can be written");
    if (img.width <= 0 || img.height <= 0) fail(path, "empty image");

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");

    out << (img.channels == 1 ? "Pf" : "PF") << "\n"
        << img.width << " " << img.height << "\n"
        << "-1.0" << "\n";

    // Bottom-to-top rows, channels interleaved per pixel in PF.
    std::vector<float> row(static_cast<size_t>(img.width) * img.channels);
    for (int y = img.height - 1; y >= 0; --y) {
        size_t k = 0;
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) row[k++] = static_cast<float>(img.at(x, y, c));
        if (!host_is_little_endian())
            byteswap4(reinterpret_cast<unsigned char*>(row.data()), row.size());
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) fail(path, "write failed");
}

Image read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");

    const std::string magic = next_token(in);
    int channels = 0;
    if (magic == "Pf") channels = 1;
    else if (magic == "PF") channels = 3;
    else fail(path, "bad magic '" + magic + "'");

    int w = 0, h = 0;
    double scale = 0.0;
    try {
        w = std::stoi(next_token(in));
        h = std::stoi(next_token(in));
        scale = std::stod(next_token(in));
    } catch (const std::exception&) {
        fail(path, "malformed header");
    }
    if (w <= 0 || h <= 0) fail(path, "bad dimensions");
    if (scale == 0.0) fail(path, "zero scale");
    in.get();  // single whitespace byte after the scale line

    const bool file_little = scale < 0.0;
    Image img(w, h, channels);
    std::vector<float> row(static_cast<size_t>(w) * channels);
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) fail(path, "truncated pixel data");
        if (file_little != host_is_little_endian())
            byteswap4(reinterpret_cast<unsigned char*>(row.data()), row.size());
        size_t k = 0;
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) img.at(x, y, c) = row[k++];
    }
    return img;
}

}  // namespace tofsplat
