#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "tofsplat/pfm.hpp"

using namespace tofsplat;
namespace fs = std::filesystem;

namespace {
std::string temp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}
}  // namespace

TEST_CASE("grayscale round trip is bit-exact") {
    Image img(7, 5, 1);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-10.f, 10.f);
    for (double& v : img.data) v = u(rng);  // f32-representable values
    img.at(2, 3, 0) = invalid_value();

    const std::string path = temp_path("tofsplat_pfm_1ch.pfm");
    write_pfm(path, img);
    const Image back = read_pfm(path);
    REQUIRE(back.same_shape(img));
    for (size_t i = 0; i < img.data.size(); ++i) {
        if (!is_valid(img.data[i]))
            CHECK(!is_valid(back.data[i]));
        else
            CHECK(back.data[i] == img.data[i]);
    }

    // write -> read -> write reproduces the same bytes
    const std::string path2 = temp_path("tofsplat_pfm_1ch_b.pfm");
    write_pfm(path2, back);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("3-channel round trip") {
    Image img(4, 3, 3);
    for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(0.25 * i - 2);
    const std::string path = temp_path("tofsplat_pfm_3ch.pfm");
    write_pfm(path, img);
    const Image back = read_pfm(path);
    REQUIRE(back.same_shape(img));
    for (size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == img.data[i]);
}

TEST_CASE("header and bottom-to-top row order") {
    Image img(1, 2, 1);
    img.at(0, 0, 0) = 1.0f;  // top row
    img.at(0, 1, 0) = 2.0f;  // bottom row
    const std::string path = temp_path("tofsplat_pfm_rows.pfm");
    write_pfm(path, img);
    const std::vector<char> bytes = slurp(path);
    const std::string header = "Pf\n1 2\n-1.0\n";
    REQUIRE(bytes.size() == header.size() + 2 * sizeof(float));
    CHECK(std::memcmp(bytes.data(), header.data(), header.size()) == 0);
    float first, second;
    std::memcpy(&first, bytes.data() + header.size(), sizeof(float));
    std::memcpy(&second, bytes.data() + header.size() + sizeof(float), sizeof(float));
    CHECK(first == 2.0f);   // bottom row is written first
    CHECK(second == 1.0f);
}

TEST_CASE("positive scale means big-endian data") {
    const std::string path = temp_path("tofsplat_pfm_be.pfm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "Pf\n1 1\n1.0\n";
        const float v = 3.5f;
        unsigned char le[4];
        std::memcpy(le, &v, 4);
        const unsigned char be[4] = {le[3], le[2], le[1], le[0]};
        out.write(reinterpret_cast<const char*>(be), 4);
    }
    const Image back = read_pfm(path);
    CHECK(back.at(0, 0, 0) == 3.5);
}

TEST_CASE("malformed files are rejected") {
    const std::string path = temp_path("tofsplat_pfm_bad.pfm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n1 1\n255\nxxx";
    }
    CHECK_THROWS(read_pfm(path));
    CHECK_THROWS(read_pfm(temp_path("tofsplat_pfm_does_not_exist.pfm")));
}
