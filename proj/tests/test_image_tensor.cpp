#include "holmes/error.hpp"
#include "holmes/image.hpp"
#include "holmes/tensor.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace holmes;

TEST_CASE("png round trip is lossless and byte-stable") {
    const Image img = testing::noise_image(17, 9, 3);
    const auto a = encode_png(img);
    CHECK(decode_image(a) == img);
    CHECK(encode_png(img) == a);
}

TEST_CASE("jpeg decode stays close") {
    const Image img = testing::solid_image(16, 16, {90, 140, 200});
    const Image back = decode_image(encode_jpeg(img, 95));
    REQUIRE(back.width() == 16);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(back.channel(8, 8, c) - img.channel(8, 8, c)) <= 3);
}

TEST_CASE("undecodable bytes") {
    const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK_THROWS_AS(decode_image(junk), ParseError);
}

TEST_CASE("crop and flip") {
    Image img(4, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) img.set(x, y, {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y), 0});
    const Image c = crop(img, {1, 1, 3, 3});
    CHECK(c.width() == 2);
    CHECK(c.get(0, 0) == Rgb{1, 1, 0});
    CHECK(c.get(1, 1) == Rgb{2, 2, 0});
    CHECK(hflip(img).get(0, 2) == Rgb{3, 2, 0});
    CHECK(hflip(hflip(img)) == img);
}

TEST_CASE("identity resize") {
    const Image img = testing::noise_image(12, 7, 5);
    CHECK(resize_bilinear(img, 12, 7) == img);
}

TEST_CASE("htf round trip") {
    Tensor t({2, 3, 4});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i) * 0.25f - 1.0f;
    const auto bytes = encode_htf(t);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HTF1");
    CHECK(bytes.size() == 8 + 3 * 4 + t.size() * 4);
    CHECK(decode_htf(bytes) == t);

    auto broken = bytes;
    broken.pop_back();
    CHECK_THROWS_AS(decode_htf(broken), ParseError);
    broken = bytes;
    broken[0] = 'X';
    CHECK_THROWS_AS(decode_htf(broken), ParseError);
}
