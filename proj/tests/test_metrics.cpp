#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pcaharm/metrics.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace pcaharm;

TEST(Binarize, ThresholdIsInclusive) {
    const Mask m = binarize(Image(3, 1, std::vector<float>{0.49f, 0.5f, 0.51f}));
    EXPECT_EQ(m.values, (std::vector<std::uint8_t>{0, 1, 1}));
    EXPECT_EQ(binarize(Image(4, 4, 0.0f)).foreground(), 0u);
    EXPECT_THROW(binarize(Image(1, 1), 1.5), MetricsError);
    EXPECT_THROW(binarize(Image(1, 1), 0.0), MetricsError);
}

TEST(Confusion, IdentityAndEmptyPrediction) {
    Mask gt(4, 4);
    for (int i : {0, 3, 5, 10, 15}) gt.values[i] = 1;
    const ConfusionCounts same = confusion(gt, gt);
    EXPECT_EQ(same, (ConfusionCounts{5, 0, 0, 11}));

    Mask four(4, 4);
    for (int i : {1, 2, 3, 4}) four.values[i] = 1;
    const ConfusionCounts none = confusion(Mask(4, 4), four);
    EXPECT_EQ(none.fn, 4u);
    EXPECT_EQ(none.tp, 0u);
    EXPECT_EQ(none.fp, 0u);

    EXPECT_THROW(confusion(Mask(2, 2), Mask(3, 2)), MetricsError);
}

TEST(Confusion, TwoByTwoExample) {
    const Mask pred(2, 2, std::vector<std::uint8_t>{1, 1, 0, 0});
    const Mask gt(2, 2, std::vector<std::uint8_t>{1, 0, 1, 0});
    EXPECT_EQ(confusion(pred, gt), (ConfusionCounts{1, 1, 1, 1}));
    EXPECT_DOUBLE_EQ(dice(pred, gt).value, 0.5);
}

TEST(Recall, Definition) {
    EXPECT_DOUBLE_EQ(recall({3, 0, 1, 0}).value, 0.75);
    const Ratio empty = recall({0, 2, 0, 5});
    EXPECT_DOUBLE_EQ(empty.value, 1.0);
    EXPECT_TRUE(empty.degenerate);
    EXPECT_DOUBLE_EQ(recall({0, 0, 7, 0}).value, 0.0);
    EXPECT_FALSE(recall({0, 0, 7, 0}).degenerate);
}

TEST(Precision, Conventions) {
    EXPECT_DOUBLE_EQ(precision({3, 1, 0, 0}).value, 0.75);
    EXPECT_DOUBLE_EQ(precision({0, 0, 0, 9}).value, 1.0);
    EXPECT_DOUBLE_EQ(precision({0, 0, 4, 9}).value, 0.0);
    EXPECT_TRUE(precision({0, 0, 4, 9}).degenerate);
}

TEST(Dice, IdenticalAndDisjoint) {
    const Mask a(2, 2, std::vector<std::uint8_t>{1, 1, 0, 0});
    const Mask b(2, 2, std::vector<std::uint8_t>{0, 0, 1, 1});
    EXPECT_DOUBLE_EQ(dice(a, a).value, 1.0);
    EXPECT_DOUBLE_EQ(dice(a, b).value, 0.0);
    const Ratio both_empty = dice(Mask(2, 2), Mask(2, 2));
    EXPECT_DOUBLE_EQ(both_empty.value, 1.0);
    EXPECT_TRUE(both_empty.degenerate);
}

TEST(Metrics, MatchBruteForceCounting) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t w = 1 + rng() % 64, h = 1 + rng() % 64;
        const double density = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const Mask pred = synth::random_mask(rng, w, h, density);
        const Mask gt = synth::random_mask(rng, w, h, density * 0.5);
        const ConfusionCounts c = confusion(pred, gt);
        const oracle::Counts o = oracle::set_counts(pred, gt);
        ASSERT_EQ(c.tp, o.tp);
        ASSERT_EQ(c.fp, o.fp);
        ASSERT_EQ(c.fn, o.fn);
        ASSERT_EQ(c.tn, o.tn);
        if (o.tp + o.fn > 0) {
            EXPECT_EQ(recall(c).value, static_cast<double>(o.tp) / static_cast<double>(o.tp + o.fn));
        }
        if (2 * o.tp + o.fp + o.fn > 0) {
            EXPECT_EQ(dice(c).value, 2.0 * static_cast<double>(o.tp) / static_cast<double>(2 * o.tp + o.fp + o.fn));
        }
    }
}

TEST(Metrics, DiceIsSymmetricAndBounded) {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 100; ++trial) {
        const Mask a = synth::random_mask(rng, 16, 16, 0.3);
        const Mask b = synth::random_mask(rng, 16, 16, 0.3);
        const double ab = dice(a, b).value;
        EXPECT_EQ(ab, dice(b, a).value);
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 1.0);
        const auto c = confusion(a, b);
        EXPECT_EQ(c.total(), 256u);
    }
}

TEST(Loss, HandDerivedTwoByTwo) {
    const Image prob(2, 2, 0.5f);
    const Mask gt(2, 2, std::vector<std::uint8_t>{1, 1, 0, 0});
    const double expected = 0.5 * 0.5 + 0.5 * std::log(2.0);
    EXPECT_NEAR(combined_loss(prob, gt, {0.5, 0.0}), expected, 1e-9);
}

TEST(Loss, PerfectPredictionIsNearZero) {
    const Mask gt(3, 3, std::vector<std::uint8_t>{1, 0, 1, 0, 1, 0, 1, 0, 1});
    Image prob(3, 3);
    for (std::size_t i = 0; i < 9; ++i) prob.values[i] = gt.values[i];
    EXPECT_LE(combined_loss(prob, gt), 1e-5);
}

TEST(Loss, EndpointsReduceToComponents) {
    std::mt19937_64 rng(23);
    const Image prob = synth::random_image(rng, 8, 8);
    const Mask gt = synth::random_mask(rng, 8, 8, 0.4);
    EXPECT_NEAR(combined_loss(prob, gt, {0.0, 1.0}), mean_bce(prob, gt), 1e-12);
    EXPECT_NEAR(combined_loss(prob, gt, {1.0, 1.0}), soft_dice_loss(prob, gt, 1.0), 1e-12);
}

TEST(Loss, BceClipKeepsLossFinite) {
    const Image prob(2, 1, std::vector<float>{0.0f, 1.0f});
    const Mask gt(2, 1, std::vector<std::uint8_t>{1, 0});
    const double bce = mean_bce(prob, gt);
    EXPECT_TRUE(std::isfinite(bce));
    EXPECT_NEAR(bce, -std::log(kBceClip), 1e-6);
}

TEST(Loss, RejectsBadConfig) {
    EXPECT_THROW(combined_loss(Image(2, 2), Mask(2, 2), {1.5, 1.0}), MetricsError);
    EXPECT_THROW(combined_loss(Image(2, 2), Mask(2, 2), {0.5, -1.0}), MetricsError);
    EXPECT_THROW(combined_loss(Image(2, 2), Mask(3, 2)), MetricsError);
}

TEST(DatasetScores, MeanExcludesEmptyGroundTruth) {
    const Mask gt(2, 1, std::vector<std::uint8_t>{1, 1});
    std::vector<std::pair<Mask, Mask>> pairs{
        {gt, gt},
        {Mask(2, 1, std::vector<std::uint8_t>{1, 0}), gt},
        {Mask(2, 1), Mask(2, 1)},
    };
    const DatasetScores s = dataset_scores(pairs);
    EXPECT_EQ(s.images, 2u);
    EXPECT_EQ(s.degenerate, 1u);
    EXPECT_DOUBLE_EQ(s.mean.recall, 0.75);

    const DatasetScores kept = dataset_scores(pairs, true);
    EXPECT_EQ(kept.images, 3u);
    EXPECT_DOUBLE_EQ(kept.mean.recall, 2.5 / 3.0);

    std::vector<std::pair<Mask, Mask>> empty{{Mask(2, 1), Mask(2, 1)}};
    EXPECT_THROW(dataset_scores(empty), MetricsError);
}
