#include <algorithm>

#include "doctest.h"

#include "davss/rng.hpp"
#include "davss/types.hpp"
#include "oracles.hpp"

using namespace davss;

TEST_SUITE("core.labels") {

TEST_CASE("uniform block keeps its class") {
    LabelMap in(2, 2, 8);
    std::fill(in.data.begin(), in.data.end(), std::uint8_t{3});
    LabelMap out = downsample_labels(in, 1, 1);
    CHECK(out.at(0, 0) == 3);
}

TEST_CASE("tie breaks to the smaller class id") {
    LabelMap in(2, 2, 8);
    in.at(0, 0) = 3;
    in.at(0, 1) = 3;
    in.at(1, 0) = 5;
    in.at(1, 1) = 5;
    CHECK(downsample_labels(in, 1, 1).at(0, 0) == 3);
}

TEST_CASE("IGNORE wins only on strict majority") {
    LabelMap in(2, 2, 8);
    in.at(0, 0) = kIgnoreLabel;
    in.at(0, 1) = kIgnoreLabel;
    in.at(1, 0) = 4;
    in.at(1, 1) = 6;
    // two IGNORE of four is not a strict majority
    CHECK(downsample_labels(in, 1, 1).at(0, 0) == 4);

    in.at(1, 0) = kIgnoreLabel;
    CHECK(downsample_labels(in, 1, 1).at(0, 0) == kIgnoreLabel);
}

TEST_CASE("random map matches the per-block counting oracle") {
    auto rng = make_rng(11, 0);
    LabelMap in(8, 8, 6);
    for (auto& v : in.data) {
        v = rng() % 7 == 0 ? kIgnoreLabel : static_cast<std::uint8_t>(rng() % 6);
    }
    LabelMap got = downsample_labels(in, 4, 4);
    LabelMap want = oracle::downsample_majority(in, 4, 4);
    CHECK(got.data == want.data);
}

TEST_CASE("permutation inside each block does not change the result") {
    auto rng = make_rng(12, 0);
    LabelMap in(6, 6, 5);
    for (auto& v : in.data) v = static_cast<std::uint8_t>(rng() % 5);
    LabelMap base = downsample_labels(in, 3, 3);

    LabelMap shuffled = in;
    for (int fy = 0; fy < 3; ++fy) {
        for (int fx = 0; fx < 3; ++fx) {
            std::vector<std::uint8_t> block;
            for (int y = fy * 2; y < fy * 2 + 2; ++y) {
                for (int x = fx * 2; x < fx * 2 + 2; ++x) block.push_back(shuffled.at(y, x));
            }
            std::shuffle(block.begin(), block.end(), rng);
            size_t k = 0;
            for (int y = fy * 2; y < fy * 2 + 2; ++y) {
                for (int x = fx * 2; x < fx * 2 + 2; ++x) shuffled.at(y, x) = block[k++];
            }
        }
    }
    CHECK(downsample_labels(shuffled, 3, 3).data == base.data);
}

TEST_CASE("non-integer ratios are rejected") {
    LabelMap in(6, 6, 4);
    CHECK_THROWS_AS(downsample_labels(in, 4, 3), std::invalid_argument);
    CHECK_THROWS_AS(downsample_labels(in, 3, 4), std::invalid_argument);
    CHECK_THROWS_AS(downsample_labels(in, 7, 3), std::invalid_argument);
}

}  // TEST_SUITE
