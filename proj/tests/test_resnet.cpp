// Network-level checks: parameter bookkeeping, softmax normalization,
// the activation-map/logit identity, the residual shortcut, training
// progress, determinism, and the binary model container.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <set>

#include "testutil.hpp"

using namespace camloc;
using testutil::random_tensor;

namespace {

// Parameter count computed from the architecture definition, not from
// the layer objects.
std::size_t expected_params(std::size_t k, std::size_t in_ch = 1) {
    const std::size_t filters[3] = {64, 128, 128};
    std::size_t total = 0;
    std::size_t in = in_ch;
    for (int b = 0; b < 3; ++b) {
        const std::size_t out = filters[b];
        total += out * in * k + out + 2 * out;  // cb1 conv + bias + bn
        total += 2 * (out * out * k + out + 2 * out); // cb2, cb3
        if (in != out) total += out * in * 1 + out + 2 * out; // projection
        in = out;
    }
    total += 2 * 128 + 2; // head
    return total;
}

std::vector<float> flat_params(ResNet<float>& m) {
    std::vector<float> v;
    for (const auto& p : m.params()) v.insert(v.end(), p.value, p.value + p.size);
    return v;
}

} // namespace

TEST_CASE("parameter count matches the architecture formula") {
    for (std::size_t k : {5u, 7u, 9u, 15u, 25u}) {
        ResNetSpec spec;
        spec.kernel_size = k;
        ResNet<float> net(spec, 1);
        CHECK(net.param_count() == expected_params(k));
    }
    ResNetSpec s5, s25;
    s5.kernel_size = 5;
    s25.kernel_size = 25;
    CHECK(ResNet<float>(s5, 1).param_count() < ResNet<float>(s25, 1).param_count());
}

TEST_CASE("parameter names are unique and sizes add up") {
    ResNetSpec spec;
    ResNet<float> net(spec, 3);
    auto params = net.params();
    std::set<std::string> names;
    std::size_t total = 0;
    for (const auto& p : params) {
        CHECK(names.insert(p.name).second);
        total += p.size;
    }
    CHECK(total == net.param_count());
    auto buffers = net.buffers();
    for (const auto& b : buffers) {
        CHECK(names.insert(b.name).second);
    }
    // 3 BN pairs per block, plus 2 projection BNs
    CHECK(buffers.size() == 2 * (9 + 2));
}

TEST_CASE("forward yields normalized probabilities and expected shapes") {
    ResNetSpec spec;
    spec.kernel_size = 5;
    ResNet<float> net(spec, 7);
    Rng rng(100);
    const auto x = random_tensor<float>(3, 1, 60, rng);
    const auto r = net.forward(x, true);
    REQUIRE(r.probs.batch() == 3);
    REQUIRE(r.probs.channels() == 2);
    REQUIRE(r.features.channels() == 128);
    REQUIRE(r.features.length() == 60);
    for (std::size_t n = 0; n < 3; ++n) {
        CHECK(r.probs(n, 0, 0) + r.probs(n, 1, 0) ==
              Catch::Approx(1.0).epsilon(1e-6));
        CHECK(r.probs(n, 0, 0) >= 0.0f);
        CHECK(r.probs(n, 1, 0) >= 0.0f);
    }
    for (std::size_t i = 0; i < r.features.size(); ++i) {
        CHECK(std::isfinite(r.features.data()[i]));
    }
}

TEST_CASE("activation map ties back to the logit through pooling") {
    Rng rng(200);
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        ResNetSpec spec;
        spec.kernel_size = seed % 2 ? 5 : 9;
        ResNet<float> net(spec, seed);
        const auto x = random_tensor<float>(2, 1, 50, rng);
        const auto r = net.forward(x, true);
        for (std::size_t cls = 0; cls < 2; ++cls) {
            const auto cam = net.cam(r.features, cls);
            for (std::size_t n = 0; n < 2; ++n) {
                double mean = 0.0;
                for (std::size_t l = 0; l < 50; ++l) mean += cam(n, 0, l);
                mean /= 50.0;
                const double lhs = mean + net.head().bias()(0, 0, cls);
                const double rhs = r.logits(n, cls, 0);
                CHECK(std::abs(lhs - rhs) <=
                      1e-4 * std::max({1.0, std::abs(lhs), std::abs(rhs)}));
            }
        }
    }
}

TEST_CASE("activation map is the head-weighted feature sum") {
    ResNetSpec spec;
    spec.kernel_size = 5;
    ResNet<float> net(spec, 21);
    Rng rng(300);
    const auto x = random_tensor<float>(1, 1, 40, rng);
    const auto r = net.forward(x, true);

    // One-hot head row: the map must reproduce feature channel 17.
    net.head().weight().fill(0.0f);
    net.head().weight()(0, 1, 17) = 1.0f;
    const auto cam = net.cam(r.features, 1);
    for (std::size_t l = 0; l < 40; ++l) {
        CHECK(cam(0, 0, l) == r.features(0, 17, l));
    }
    CHECK_THROWS_AS(net.cam(r.features, 2), DataError);
    CHECK_THROWS_AS(net.cam(Tensor<float>::zeros(1, 64, 40), 1), DataError);
}

TEST_CASE("zeroed main path turns a block into the identity") {
    ResNetSpec spec;
    spec.kernel_size = 7;
    ResNet<float> net(spec, 31);
    auto& block = net.block(2); // 128 -> 128, identity shortcut
    block.cb3.conv.weight().fill(0.0f);
    block.cb3.conv.bias().fill(0.0f);
    Rng rng(400);
    const auto x = random_tensor<float>(2, 128, 30, rng);
    const auto y = block.forward(x, true);
    REQUIRE(y.same_shape(x));
    CHECK(std::memcmp(y.data(), x.data(), x.size() * sizeof(float)) == 0);
}

TEST_CASE("input validation") {
    ResNetSpec spec;
    ResNet<float> net(spec, 1);
    CHECK_THROWS_AS(net.forward(Tensor<float>::zeros(1, 2, 30), false), DataError);
    ResNetSpec bad;
    bad.kernel_size = 0;
    CHECK_THROWS_AS(ResNet<float>(bad, 1), ConfigError);
}

TEST_CASE("training reduces the loss on a separable toy problem") {
    const auto data = testutil::toy_dataset(32, 64, 5);
    std::vector<std::size_t> idx(data.num_windows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto batch = data.batch(idx);
    std::vector<int> labels(data.num_windows());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = data.weak_labels[i];

    ResNetSpec spec;
    spec.kernel_size = 5;
    ResNet<float> net(spec, 77);
    Adam<float> adam(net.params(), 1e-3);
    const double initial = net.loss_forward(batch, labels, true);
    double final_loss = initial;
    for (int step = 0; step < 30; ++step) {
        final_loss = net.loss_forward(batch, labels, true);
        net.backward();
        adam.step();
    }
    CHECK(final_loss < 0.7 * initial);
}

TEST_CASE("evaluation is deterministic") {
    ResNetSpec spec;
    spec.kernel_size = 5;
    ResNet<float> net(spec, 55);
    Rng rng(500);
    const auto x = random_tensor<float>(2, 1, 64, rng);
    net.loss_forward(x, {0, 1}, true); // initialize BN running stats
    const auto a = net.forward(x, false);
    const auto b = net.forward(x, false);
    CHECK(std::memcmp(a.probs.data(), b.probs.data(),
                      a.probs.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(a.features.data(), b.features.data(),
                      a.features.size() * sizeof(float)) == 0);
}

TEST_CASE("same seed builds bit-identical networks") {
    ResNetSpec spec;
    ResNet<float> a(spec, 123);
    ResNet<float> b(spec, 123);
    const auto fa = flat_params(a);
    const auto fb = flat_params(b);
    REQUIRE(fa.size() == fb.size());
    CHECK(std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(float)) == 0);

    ResNet<float> c(spec, 124);
    CHECK(std::memcmp(fa.data(), flat_params(c).data(),
                      fa.size() * sizeof(float)) != 0);
}

TEST_CASE("model container round trip is bit-exact") {
    testutil::TempDir tmp("camloc_model");
    ResNetSpec spec;
    spec.kernel_size = 9;
    ResNet<float> net(spec, 99);
    Rng rng(600);
    const auto x = random_tensor<float>(4, 1, 64, rng);
    Adam<float> adam(net.params(), 1e-3);
    for (int step = 0; step < 3; ++step) {
        net.loss_forward(x, {0, 1, 0, 1}, true);
        net.backward();
        adam.step();
    }
    net.epochs_run = 3;
    net.best_val_loss = 0.123;

    const auto path = tmp.path / "model.bin";
    save_model(net, path);
    auto loaded = load_model<float>(path);

    CHECK(loaded.spec() == net.spec());
    CHECK(loaded.seed() == net.seed());
    CHECK(loaded.epochs_run == 3);
    CHECK(loaded.best_val_loss == 0.123);
    CHECK(loaded.bn_stats_initialized());

    const auto fa = flat_params(net);
    const auto fb = flat_params(loaded);
    REQUIRE(fa.size() == fb.size());
    CHECK(std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(float)) == 0);

    auto bufs_a = net.buffers();
    auto bufs_b = loaded.buffers();
    REQUIRE(bufs_a.size() == bufs_b.size());
    for (std::size_t i = 0; i < bufs_a.size(); ++i) {
        CHECK(std::memcmp(bufs_a[i].value, bufs_b[i].value,
                          bufs_a[i].size * sizeof(float)) == 0);
    }

    const auto ra = net.forward(x, false);
    const auto rb = loaded.forward(x, false);
    CHECK(std::memcmp(ra.probs.data(), rb.probs.data(),
                      ra.probs.size() * sizeof(float)) == 0);

    // Saving the loaded model again must reproduce the file exactly.
    const auto path2 = tmp.path / "model2.bin";
    save_model(loaded, path2);
    CHECK(testutil::read_file_bytes(path) == testutil::read_file_bytes(path2));
}

TEST_CASE("model container rejects damaged files") {
    testutil::TempDir tmp("camloc_badmodel");
    ResNetSpec spec;
    ResNet<float> net(spec, 5);
    const auto path = tmp.path / "model.bin";
    save_model(net, path);

    // An untrained model has no recorded validation loss; the sentinel
    // survives the round trip.
    {
        const auto fresh = load_model<float>(path);
        CHECK(std::isinf(fresh.best_val_loss));
        CHECK(fresh.epochs_run == 0);
    }

    auto bytes = testutil::read_file_bytes(path);
    bytes[0] = 'X';
    const auto bad_magic = tmp.path / "bad_magic.bin";
    {
        std::ofstream os(bad_magic, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_model<float>(bad_magic), FormatError);

    auto truncated = testutil::read_file_bytes(path);
    truncated.resize(truncated.size() / 2);
    const auto trunc_path = tmp.path / "truncated.bin";
    {
        std::ofstream os(trunc_path, std::ios::binary);
        os.write(truncated.data(), static_cast<std::streamsize>(truncated.size()));
    }
    CHECK_THROWS_AS(load_model<float>(trunc_path), FormatError);

    CHECK_THROWS_AS(load_model<double>(path), FormatError);
    CHECK_THROWS_AS(load_model<float>(tmp.path / "missing.bin"), FormatError);
}
