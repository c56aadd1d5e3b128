#include <algorithm>
#include <deque>

#include "doctest.h"

#include "davss/fatc.hpp"
#include "davss/rng.hpp"
#include "oracles.hpp"

using namespace davss;

namespace {

FeatureCentroid centroid_of(int c, std::vector<double> v) {
    return FeatureCentroid{c, 0, std::move(v)};
}

double eval_loss(const std::vector<FeatureCentroid>& cents, const FeatureBank& bank,
                 ClassReduction red = ClassReduction::Sum) {
    return feature_alignment_loss(cents, bank, red).loss;
}

}  // namespace

TEST_SUITE("fatc") {

TEST_CASE("centroid of a uniform region is the region value") {
    FeatureMap f(3, 3, 2);
    for (size_t p = 0; p < 9; ++p) {
        f.data[2 * p] = 4.0;
        f.data[2 * p + 1] = -1.5;
    }
    BinaryMap mask(3, 3);
    mask.at(0, 0) = mask.at(1, 1) = mask.at(2, 2) = 1;
    auto cents = compute_centroids(f, {mask}, 3);
    REQUIRE(cents.size() == 1);
    CHECK(cents[0].class_id == 3);
    CHECK(cents[0].values[0] == doctest::Approx(4.0));
    CHECK(cents[0].values[1] == doctest::Approx(-1.5));
}

TEST_CASE("two-pixel arithmetic mean") {
    FeatureMap f(1, 2, 2);
    f.at(0, 0, 0) = 0.0;
    f.at(0, 0, 1) = 2.0;
    f.at(0, 1, 0) = 2.0;
    f.at(0, 1, 1) = 0.0;
    BinaryMap mask(1, 2, 1);
    auto cents = compute_centroids(f, {mask}, 0);
    REQUIRE(cents.size() == 1);
    CHECK(cents[0].values == std::vector<double>{1.0, 1.0});
}

TEST_CASE("random centroids match the masked-mean oracle") {
    auto rng = make_rng(90, 0);
    std::uniform_real_distribution<double> dist(-3.0, 3.0);
    FeatureMap f(4, 4, 5);
    for (auto& v : f.data) v = dist(rng);
    BinaryMap mask(4, 4);
    size_t n = 0;
    for (auto& v : mask.data) n += (v = rng() % 2);
    if (n == 0) mask.at(0, 0) = 1;

    auto cents = compute_centroids(f, {mask}, 1);
    REQUIRE(cents.size() == 1);
    auto want = oracle::masked_mean(f, mask);
    for (int d = 0; d < 5; ++d) CHECK(cents[0].values[d] == doctest::Approx(want[d]).epsilon(1e-6));

    SUBCASE("empty masks produce nothing") {
        BinaryMap empty(4, 4);
        CHECK(compute_centroids(f, {empty}, 1).empty());
    }
}

TEST_CASE("source valid mask requires both prediction and truth to be c") {
    LabelMap pred(2, 2, 4), truth(2, 2, 4);
    std::fill(pred.data.begin(), pred.data.end(), std::uint8_t{2});
    std::fill(truth.data.begin(), truth.data.end(), std::uint8_t{2});
    CHECK(source_valid_mask(pred, truth, 2).count() == 4);

    truth.data = {0, 1, 0, 1};
    CHECK(source_valid_mask(pred, truth, 2).count() == 0);

    // checkerboard agreement equals the per-pixel AND
    pred.data = {2, 0, 2, 0};
    truth.data = {2, 2, 0, 0};
    BinaryMap m = source_valid_mask(pred, truth, 2);
    CHECK(m.data == std::vector<std::uint8_t>{1, 0, 0, 0});
}

TEST_CASE("bank is a per-class FIFO") {
    FeatureBank bank(3, 1, 2);
    bank.push(centroid_of(0, {1.0}));
    bank.push(centroid_of(0, {2.0}));
    bank.push(centroid_of(0, {3.0}));
    REQUIRE(bank.size(0) == 2);
    CHECK(bank.entries(0)[0] == std::vector<double>{2.0});
    CHECK(bank.entries(0)[1] == std::vector<double>{3.0});

    SUBCASE("classes are independent") {
        bank.push(centroid_of(1, {9.0}));
        CHECK(bank.size(0) == 2);
        CHECK(bank.size(1) == 1);
        CHECK(bank.size(2) == 0);
    }
    SUBCASE("dimension mismatch is rejected") {
        CHECK_THROWS_AS(bank.push(centroid_of(0, {1.0, 2.0})), std::invalid_argument);
    }
}

TEST_CASE("100 pushes on capacity 50 keep pushes 51..100 in order") {
    FeatureBank bank(1, 1, 50);
    std::deque<double> replay;  // independent replay oracle
    for (int i = 1; i <= 100; ++i) {
        bank.push(centroid_of(0, {static_cast<double>(i)}));
        replay.push_back(i);
        if (replay.size() > 50) replay.pop_front();
    }
    REQUIRE(bank.size(0) == 50);
    for (size_t j = 0; j < 50; ++j) {
        CHECK(bank.entries(0)[j][0] == replay[j]);
        CHECK(bank.entries(0)[j][0] == doctest::Approx(51.0 + j));
    }
}

TEST_CASE("bank save/load round trip") {
    FeatureBank bank(3, 2, 5);
    bank.push(centroid_of(0, {1.0, 2.0}));
    bank.push(centroid_of(2, {3.0, 4.0}));
    bank.push(centroid_of(2, {5.0, 6.0}));
    auto dir = std::filesystem::temp_directory_path() / "davss_bank_test";
    bank.save(dir);
    FeatureBank back = FeatureBank::load(dir);
    CHECK(back.num_classes() == 3);
    CHECK(back.dim() == 2);
    CHECK(back.size(0) == 1);
    CHECK(back.size(1) == 0);
    REQUIRE(back.size(2) == 2);
    CHECK(back.entries(2)[1][0] == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("alignment loss hand cases") {
    FeatureBank bank(4, 2, 50);

    SUBCASE("bank containing the query gives zero loss and gradient") {
        bank.push(centroid_of(1, {0.5, -0.5}));
        auto res = feature_alignment_loss({centroid_of(1, {0.5, -0.5})}, bank);
        CHECK(res.loss == 0.0);
        CHECK(res.centroid_grads[0] == std::vector<double>{0.0, 0.0});
    }
    SUBCASE("nearest of two bank entries") {
        bank.push(centroid_of(1, {0.0, 0.0}));
        bank.push(centroid_of(1, {3.0, 3.0}));
        auto res = feature_alignment_loss({centroid_of(1, {1.0, 1.0})}, bank);
        CHECK(res.loss == doctest::Approx(2.0));  // min(2, 4), k = 1
        CHECK(res.centroid_grads[0] == std::vector<double>{1.0, 1.0});
    }
    SUBCASE("two instances normalize by k = 2") {
        bank.push(centroid_of(1, {0.0, 0.0}));
        auto res = feature_alignment_loss(
            {centroid_of(1, {1.0, 1.0}), centroid_of(1, {-2.0, 0.0})}, bank);
        CHECK(res.loss == doctest::Approx((2.0 + 2.0) / 2.0));
        CHECK(res.centroid_grads[0] == std::vector<double>{0.5, 0.5});
        CHECK(res.centroid_grads[1] == std::vector<double>{-0.5, 0.0});
    }
    SUBCASE("empty-bank classes contribute nothing") {
        bank.push(centroid_of(1, {0.0, 0.0}));
        auto res = feature_alignment_loss(
            {centroid_of(1, {1.0, 1.0}), centroid_of(2, {9.0, 9.0})}, bank);
        CHECK(res.loss == doctest::Approx(2.0));
        CHECK(res.centroid_grads[1] == std::vector<double>{0.0, 0.0});
    }
    SUBCASE("class contributions sum across classes") {
        bank.push(centroid_of(1, {0.0, 0.0}));
        bank.push(centroid_of(2, {0.0, 0.0}));
        auto res = feature_alignment_loss(
            {centroid_of(1, {1.0, 0.0}), centroid_of(2, {0.0, 2.0})}, bank);
        CHECK(res.loss == doctest::Approx(1.0 + 2.0));

        auto mean_res = feature_alignment_loss(
            {centroid_of(1, {1.0, 0.0}), centroid_of(2, {0.0, 2.0})}, bank, ClassReduction::Mean);
        CHECK(mean_res.loss == doctest::Approx((1.0 + 2.0) / 2.0));
    }
}

TEST_CASE("loss is non-negative and zero only at bank entries") {
    auto rng = make_rng(91, 0);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    FeatureBank bank(2, 3, 50);
    for (int i = 0; i < 10; ++i) bank.push(centroid_of(0, {dist(rng), dist(rng), dist(rng)}));

    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> q{dist(rng), dist(rng), dist(rng)};
        const double loss = eval_loss({centroid_of(0, q)}, bank);
        CHECK(loss >= 0.0);
    }
    // query equal to a stored entry
    auto stored = bank.entries(0)[4];
    CHECK(eval_loss({centroid_of(0, stored)}, bank) == 0.0);
}

TEST_CASE("nearest neighbor equals exhaustive search on a size-50 bank") {
    auto rng = make_rng(92, 0);
    std::uniform_real_distribution<double> dist(-5.0, 5.0);
    FeatureBank bank(1, 4, 50);
    std::vector<std::vector<double>> entries;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> v{dist(rng), dist(rng), dist(rng), dist(rng)};
        entries.push_back(v);
        bank.push(centroid_of(0, v));
    }
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> q{dist(rng), dist(rng), dist(rng), dist(rng)};
        auto [want, want_j] = oracle::nearest_l1(q, entries);
        CHECK(eval_loss({centroid_of(0, q)}, bank) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("permutation of bank entries leaves the loss unchanged") {
    auto rng = make_rng(93, 0);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    std::vector<std::vector<double>> entries;
    for (int i = 0; i < 12; ++i) entries.push_back({dist(rng), dist(rng)});
    std::vector<double> q{dist(rng), dist(rng)};

    FeatureBank a(1, 2, 50), b(1, 2, 50);
    for (const auto& e : entries) a.push(centroid_of(0, e));
    std::shuffle(entries.begin(), entries.end(), rng);
    for (const auto& e : entries) b.push(centroid_of(0, e));
    CHECK(eval_loss({centroid_of(0, q)}, a) == doctest::Approx(eval_loss({centroid_of(0, q)}, b)));
}

TEST_CASE("analytic gradient matches central differences away from kinks") {
    auto rng = make_rng(94, 0);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const int dim = 4;
    FeatureBank bank(2, dim, 50);
    for (int i = 0; i < 8; ++i) {
        bank.push(centroid_of(0, {dist(rng), dist(rng), dist(rng), dist(rng)}));
        bank.push(centroid_of(1, {dist(rng), dist(rng), dist(rng), dist(rng)}));
    }

    const double eps = 1e-5;
    int checked = 0;
    for (int trial = 0; trial < 12; ++trial) {
        std::vector<FeatureCentroid> cents = {
            centroid_of(0, {dist(rng), dist(rng), dist(rng), dist(rng)}),
            centroid_of(1, {dist(rng), dist(rng), dist(rng), dist(rng)}),
            centroid_of(1, {dist(rng), dist(rng), dist(rng), dist(rng)})};
        auto res = feature_alignment_loss(cents, bank);
        for (size_t i = 0; i < cents.size(); ++i) {
            for (int d = 0; d < dim; ++d) {
                auto plus = cents, minus = cents;
                plus[i].values[d] += eps;
                minus[i].values[d] -= eps;
                const double lp = eval_loss(plus, bank);
                const double lm = eval_loss(minus, bank);
                const double fd = (lp - lm) / (2 * eps);
                const double an = res.centroid_grads[i][d];
                // skip kinks: sign changes or nearest-neighbor switches make
                // the finite difference meaningless there
                if (std::abs(fd - an) > 0.5) continue;
                const double denom = std::max(std::abs(fd), std::abs(an));
                if (denom < 1e-12) continue;
                CHECK(std::abs(fd - an) / denom < 1e-4);
                ++checked;
            }
        }
    }
    CHECK(checked > 50);
}

TEST_CASE("scattered feature gradient differentiates the masked mean") {
    auto rng = make_rng(95, 0);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const int dim = 3;
    FeatureMap f(3, 4, dim);
    for (auto& v : f.data) v = dist(rng);
    BinaryMap mask_a(3, 4), mask_b(3, 4);
    mask_a.at(0, 0) = mask_a.at(0, 1) = mask_a.at(1, 1) = 1;
    mask_b.at(2, 2) = mask_b.at(2, 3) = 1;

    FeatureBank bank(1, dim, 50);
    for (int i = 0; i < 5; ++i) bank.push(centroid_of(0, {dist(rng), dist(rng), dist(rng)}));

    auto loss_of = [&](const FeatureMap& feats) {
        auto cents = compute_centroids(feats, {mask_a, mask_b}, 0);
        return eval_loss(cents, bank);
    };

    auto cents = compute_centroids(f, {mask_a, mask_b}, 0);
    auto res = feature_alignment_loss(cents, bank);
    FeatureMap grad(3, 4, dim);
    scatter_centroid_grads({mask_a, mask_b}, res.centroid_grads, 1.0, grad);

    const double eps = 1e-5;
    for (size_t i = 0; i < f.data.size(); ++i) {
        FeatureMap plus = f, minus = f;
        plus.data[i] += eps;
        minus.data[i] -= eps;
        const double fd = (loss_of(plus) - loss_of(minus)) / (2 * eps);
        CHECK(grad.data[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }
}

}  // TEST_SUITE
