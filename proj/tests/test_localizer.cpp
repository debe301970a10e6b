// Per-timestamp localization: map normalization, aggregation,
// binarization rules, detection gating, and power estimation.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "testutil.hpp"

using namespace camloc;

namespace {

const ApplianceProfile kDishwasher{"dishwasher", 300.0, 800.0, 180};

Ensemble two_member_ensemble(std::size_t input_length) {
    std::vector<Ensemble::Member> members;
    for (std::size_t m = 0; m < 2; ++m) {
        ResNetSpec spec;
        spec.kernel_size = 5;
        auto model = std::make_unique<ResNet<float>>(spec, 2000 + m);
        model->mark_bn_stats_initialized();
        members.push_back({std::move(model), 5, m, 0.1});
    }
    return Ensemble(std::move(members), "dishwasher", kDishwasher, input_length);
}

} // namespace

TEST_CASE("sigmoid reference points") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(1.0) == Catch::Approx(0.7310585786300049));
    CHECK(sigmoid(-1.0) == Catch::Approx(0.2689414213699951));
    CHECK(sigmoid(50.0) == Catch::Approx(1.0));
}

TEST_CASE("map normalization divides by a positive maximum") {
    const CamMap raw{{-1.0, 2.0, 4.0}};
    const auto n = normalize_cam(raw);
    CHECK(n.values[0] == Catch::Approx(-0.25));
    CHECK(n.values[1] == Catch::Approx(0.5));
    CHECK(n.values[2] == Catch::Approx(1.0));
}

TEST_CASE("map with no positive value normalizes to zero") {
    const auto all_neg = normalize_cam(CamMap{{-3.0, -1.0}});
    CHECK(all_neg.values == std::vector<double>{0.0, 0.0});
    const auto zeros = normalize_cam(CamMap{{0.0, 0.0, 0.0}});
    CHECK(zeros.values == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("normalization is scale invariant") {
    Rng rng(1);
    CamMap raw;
    raw.values.resize(20);
    for (auto& v : raw.values) v = rng.uniform(-1.0, 2.0);
    raw.values[3] = 2.5; // ensure a positive max
    const auto base = normalize_cam(raw);
    for (double scale : {0.5, 3.0, 1000.0}) {
        CamMap scaled = raw;
        for (auto& v : scaled.values) v *= scale;
        const auto n = normalize_cam(scaled);
        for (std::size_t i = 0; i < n.values.size(); ++i) {
            CHECK(n.values[i] == Catch::Approx(base.values[i]).margin(1e-12));
        }
        CHECK(*std::max_element(n.values.begin(), n.values.end()) ==
              Catch::Approx(1.0));
    }
}

TEST_CASE("aggregation is the per-timestamp mean") {
    const std::vector<CamMap> maps{{{1.0, 0.0, -1.0}}, {{0.0, 1.0, 1.0}}};
    const auto agg = aggregate_cams(maps);
    CHECK(agg.values[0] == Catch::Approx(0.5));
    CHECK(agg.values[1] == Catch::Approx(0.5));
    CHECK(agg.values[2] == Catch::Approx(0.0));
    CHECK_THROWS_AS(aggregate_cams({}), DataError);
    CHECK_THROWS_AS(aggregate_cams({CamMap{{1.0}}, CamMap{{1.0, 2.0}}}), DataError);
}

TEST_CASE("binarization products and both rounding modes") {
    const CamMap cam{{0.5, -0.2, 0.3, 0.0, 0.4}};
    const std::vector<float> x{1.0f, 1.0f, 0.0f, 2.0f, 0.5f};

    const auto strict = attention_binarize(cam, x, Binarize::strict);
    CHECK(strict.values == std::vector<std::uint8_t>{1, 0, 0, 0, 1});

    // sigmoid(0) = 0.5 rounds up in the literal reading, so zero products
    // switch ON.
    const auto literal = attention_binarize(cam, x, Binarize::round_half_up);
    CHECK(literal.values == std::vector<std::uint8_t>{1, 0, 1, 1, 1});

    CHECK_THROWS_AS(attention_binarize(cam, {1.0f}), DataError);
}

TEST_CASE("undetected window forces all-zero status") {
    auto ens = two_member_ensemble(64);
    for (auto& m : ens.members()) {
        m.model->head().weight().fill(0.0f);
        m.model->head().bias().fill(0.0f); // probability exactly 0.5
    }
    Rng rng(2);
    const auto window = testutil::random_tensor<float>(1, 1, 64, rng, 0.1, 2.0);
    const auto res = localize(ens, window);
    CHECK_FALSE(res.detected);
    CHECK(res.prob == 0.5);
    CHECK(res.cam.values.empty());
    REQUIRE(res.status.values.size() == 64);
    for (auto s : res.status.values) CHECK(s == 0);
}

TEST_CASE("detected window reproduces the step-by-step pipeline") {
    auto ens = two_member_ensemble(48);
    for (auto& m : ens.members()) {
        m.model->head().bias()(0, 0, 1) = 5.0f; // force detection
    }
    Rng rng(3);
    const auto window = testutil::random_tensor<float>(1, 1, 48, rng, 0.0, 1.5);
    const auto res = localize(ens, window);
    REQUIRE(res.detected);
    CHECK(res.prob > 0.5);

    // Recompute by hand: per-member map, normalize by max, average, then
    // strict product rule.
    std::vector<std::vector<double>> norm(2);
    for (std::size_t m = 0; m < 2; ++m) {
        auto& model = *ens.members()[m].model;
        const auto fwd = model.forward(window, false);
        const auto raw = model.cam(fwd.features, 1);
        double mx = raw(0, 0, 0);
        for (std::size_t l = 0; l < 48; ++l) mx = std::max<double>(mx, raw(0, 0, l));
        norm[m].resize(48);
        for (std::size_t l = 0; l < 48; ++l) {
            norm[m][l] = mx > 0 ? raw(0, 0, l) / mx : 0.0;
        }
    }
    for (std::size_t l = 0; l < 48; ++l) {
        const double mean = (norm[0][l] + norm[1][l]) / 2.0;
        CHECK(res.cam.values[l] == Catch::Approx(mean).margin(1e-12));
        const std::uint8_t expected =
            mean * static_cast<double>(window(0, 0, l)) > 0 ? 1 : 0;
        CHECK(res.status.values[l] == expected);
    }
}

TEST_CASE("batched localization matches one-at-a-time") {
    // Threshold away from 0.5 so near-even probabilities from untrained
    // members cannot flip detection between the two paths.
    std::vector<Ensemble::Member> members;
    for (std::size_t m = 0; m < 2; ++m) {
        ResNetSpec spec;
        spec.kernel_size = 5;
        auto model = std::make_unique<ResNet<float>>(spec, 2000 + m);
        model->mark_bn_stats_initialized();
        members.push_back({std::move(model), 5, m, 0.1});
    }
    const Ensemble ens(std::move(members), "dishwasher", kDishwasher, 32, 0.3);

    Rng rng(4);
    const auto batch = testutil::random_tensor<float>(5, 1, 32, rng, 0.0, 1.0);
    const auto all = localize_batch(ens, batch);
    REQUIRE(all.size() == 5);
    for (std::size_t b = 0; b < 5; ++b) {
        Tensor<float> one(1, 1, 32);
        std::copy(batch.data() + b * 32, batch.data() + (b + 1) * 32, one.data());
        const auto single = localize(ens, one);
        CHECK(single.detected == all[b].detected);
        CHECK(single.prob == Catch::Approx(all[b].prob).margin(1e-9));
        CHECK(single.status.values == all[b].status.values);
    }
    CHECK_THROWS_AS(localize(ens, batch), DataError); // batch of 5, not 1
}

TEST_CASE("power estimate caps at the aggregate") {
    StatusSeries on;
    on.values = {1};
    CHECK(estimate_power(on, kDishwasher, {500.0})[0] == 500.0);
    CHECK(estimate_power(on, kDishwasher, {1200.0})[0] == 800.0);

    const ApplianceProfile kettle{"kettle", 1000.0, 2000.0, 180};
    CHECK(estimate_power(on, kettle, {3000.0})[0] == 2000.0);

    StatusSeries off;
    off.values = {0};
    CHECK(estimate_power(off, kettle, {3000.0})[0] == 0.0);

    StatusSeries many;
    many.values = {1, 0, 1, 1};
    const auto est = estimate_power(many, kDishwasher, {100.0, 900.0, 0.0, 2000.0});
    CHECK(est == std::vector<double>{100.0, 0.0, 0.0, 800.0});

    CHECK_THROWS_AS(estimate_power(on, kDishwasher, {-1.0}), DataError);
    CHECK_THROWS_AS(estimate_power(many, kDishwasher, {1.0}), DataError);
}

TEST_CASE("power estimate never exceeds the aggregate on random inputs") {
    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 1 + rng.uniform_int(50);
        StatusSeries st;
        st.values.resize(n);
        std::vector<double> agg(n);
        ApplianceProfile p = kDishwasher;
        p.mean_power_w = rng.uniform(10.0, 4000.0);
        for (std::size_t i = 0; i < n; ++i) {
            st.values[i] = rng.uniform() < 0.5 ? 1 : 0;
            agg[i] = rng.uniform(0.0, 5000.0);
        }
        const auto est = estimate_power(st, p, agg);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(est[i] <= agg[i]);
            CHECK(est[i] >= 0.0);
            if (!st.values[i]) CHECK(est[i] == 0.0);
        }
    }
}
