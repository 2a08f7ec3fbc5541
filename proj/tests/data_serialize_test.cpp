#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mmrl/data.hpp"
#include "mmrl/downstream.hpp"
#include "mmrl/errors.hpp"
#include "mmrl/models.hpp"
#include "mmrl/serialize.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace mmrl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    fs::path dir = fs::temp_directory_path() / "mmrl_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

std::vector<char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("synthetic generation is deterministic and latent-structured") {
    SynthSpec spec;
    spec.n = 64;
    spec.latent_dim = 3;
    spec.height = spec.width = 8;
    spec.feature_dim = 12;
    spec.noise_sigma = 0.0;
    spec.seed = 4;

    const MultiModalDataset a = generate_synthetic(spec);
    const MultiModalDataset b = generate_synthetic(spec);
    CHECK(bit_equal(a.m0, b.m0));
    CHECK(bit_equal(a.m1, b.m1));
    CHECK(a.labels == b.labels);
    CHECK(a.targets == b.targets);

    // noise-free M1 has numerical rank exactly r
    CHECK(testsupport::numerical_rank(a.m1) == 3);

    SynthSpec bad = spec;
    bad.latent_dim = 64;
    CHECK_THROWS_AS(generate_synthetic(bad), ValueError);
}

TEST_CASE("with rank 1 and no noise, labels equal the sign of targets") {
    SynthSpec spec;
    spec.n = 100;
    spec.latent_dim = 1;
    spec.height = spec.width = 4;
    spec.feature_dim = 4;
    spec.noise_sigma = 0.0;
    spec.seed = 9;
    const MultiModalDataset data = generate_synthetic(spec);
    for (std::size_t i = 0; i < spec.n; ++i) {
        CHECK(data.labels[i] == (data.targets[i] > 0.0 ? 1 : 0));
    }
}

TEST_CASE("synthetic labels stay reasonably balanced across seeds") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthSpec spec;
        spec.n = 256;
        spec.latent_dim = 8;
        spec.height = spec.width = 4;
        spec.feature_dim = 16;
        spec.seed = seed;
        const MultiModalDataset data = generate_synthetic(spec);
        double positive = 0.0;
        for (int y : data.labels) positive += y;
        const double rate = positive / static_cast<double>(spec.n);
        CHECK(rate >= 0.35);
        CHECK(rate <= 0.65);
    }
}

TEST_CASE("noise-free targets are an exact linear readout of the latent") {
    SynthSpec spec;
    spec.n = 48;
    spec.latent_dim = 4;
    spec.height = spec.width = 4;
    spec.feature_dim = 8;
    spec.noise_sigma = 0.0;
    spec.seed = 12;
    const MultiModalDataset data = generate_synthetic(spec);

    // The latent is not exposed, but noise-free M1 = Z.A spans the same
    // column space, so OLS from M1 must hit the targets exactly.
    const LinearRegressor reg = linreg_fit(data.m1, data.targets);
    const std::vector<double> pred = linreg_predict(reg, data.m1);
    CHECK(regression_mse(data.targets, pred) < 1e-10);
}

TEST_CASE("split is a seeded disjoint partition of the right sizes") {
    const Split s = make_split(5000, 0.8, 0);
    CHECK(s.train.size() == 4000);
    CHECK(s.test.size() == 1000);

    const Split tiny = make_split(10, 0.8, 3);
    CHECK(tiny.train.size() == 8);
    CHECK(tiny.test.size() == 2);

    std::vector<bool> seen(10, false);
    for (std::size_t i : tiny.train) seen[i] = true;
    for (std::size_t i : tiny.test) {
        CHECK_FALSE(seen[i]);  // disjoint
        seen[i] = true;
    }
    for (bool covered : seen) CHECK(covered);  // union covers everything

    const Split again = make_split(10, 0.8, 3);
    CHECK(again.train == tiny.train);

    CHECK_THROWS_AS(make_split(10, 1.2, 0), ValueError);
}

TEST_CASE("tensor files round-trip bit-exactly") {
    Rng rng(21);
    const fs::path dir = temp_dir("tensors");
    const Tensor t = testsupport::random_tensor({3, 4, 5}, rng);
    write_tensor(dir / "t.mmtf", t);
    CHECK(bit_equal(read_tensor(dir / "t.mmtf"), t));

    const Tensor s = Tensor::scalar(-0.125);
    write_tensor(dir / "s.mmtf", s);
    const Tensor s2 = read_tensor(dir / "s.mmtf");
    CHECK(s2.ndim() == 0);
    CHECK(s2.item() == -0.125);
}

TEST_CASE("malformed tensor files fail with specific errors") {
    const fs::path dir = temp_dir("badtensors");
    const Tensor t({2, 2}, {1, 2, 3, 4});
    write_tensor(dir / "t.mmtf", t);

    // wrong magic
    {
        auto bytes = file_bytes(dir / "t.mmtf");
        bytes[0] = 'X';
        std::ofstream(dir / "magic.mmtf", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
        CHECK_THROWS_WITH_AS(read_tensor(dir / "magic.mmtf"), doctest::Contains("magic"), IoError);
    }
    // truncated payload names the offset where bytes ran out
    {
        auto bytes = file_bytes(dir / "t.mmtf");
        bytes.resize(bytes.size() - 10);
        std::ofstream(dir / "trunc.mmtf", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
        CHECK_THROWS_WITH_AS(read_tensor(dir / "trunc.mmtf"), doctest::Contains("byte offset"), IoError);
    }
    // flipped payload byte breaks the checksum
    {
        auto bytes = file_bytes(dir / "t.mmtf");
        bytes[20] = static_cast<char>(bytes[20] ^ 0x40);
        std::ofstream(dir / "crc.mmtf", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
        CHECK_THROWS_WITH_AS(read_tensor(dir / "crc.mmtf"), doctest::Contains("checksum"), IoError);
    }
    // unsupported format version
    {
        auto bytes = file_bytes(dir / "t.mmtf");
        bytes[4] = 9;  // little-endian version field right after the magic
        std::ofstream(dir / "ver.mmtf", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
        CHECK_THROWS_WITH_AS(read_tensor(dir / "ver.mmtf"), doctest::Contains("version"), IoError);
    }
}

TEST_CASE("dataset directory round-trips") {
    const fs::path dir = temp_dir("dataset");
    SynthSpec spec;
    spec.n = 12;
    spec.latent_dim = 2;
    spec.height = spec.width = 4;
    spec.feature_dim = 6;
    spec.seed = 30;
    const MultiModalDataset data = generate_synthetic(spec);
    save_dataset(dir, data, &spec);

    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "m0.mmtf"));
    CHECK(fs::exists(dir / "labels.mmtf"));

    const MultiModalDataset loaded = load_dataset(dir);
    CHECK(bit_equal(loaded.m0, data.m0));
    CHECK(bit_equal(loaded.m1, data.m1));
    CHECK(loaded.labels == data.labels);
    CHECK(loaded.targets == data.targets);
    CHECK(loaded.entity_ids == data.entity_ids);
}

TEST_CASE("model bundles round-trip and embeddings survive reload") {
    Rng rng(31);
    Mmeda2Model model = make_mmeda2(1, 4, 4, 6, 3, 2, rng);
    const fs::path dir = temp_dir("bundles");
    save_model(dir / "m.mmdl", to_bundle(model));

    Mmeda2Model reloaded = mmeda2_from_bundle(load_model(dir / "m.mmdl"));
    Tensor m0 = testsupport::random_tensor({5, 1, 4, 4}, rng);
    Tensor m1 = testsupport::random_tensor({5, 6}, rng);
    CHECK(bit_equal(embed(model, m0, m1), embed(reloaded, m0, m1)));
}

TEST_CASE("tampered or mismatched bundles are rejected") {
    Rng rng(32);
    Mmeda1Model m1 = make_mmeda1(1, 4, 4, 6, 3, 2, rng);
    const fs::path dir = temp_dir("badbundles");
    save_model(dir / "m1.mmdl", to_bundle(m1));

    // single flipped byte fails the whole-file checksum
    auto bytes = file_bytes(dir / "m1.mmdl");
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x01);
    std::ofstream(dir / "tampered.mmdl", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
    CHECK_THROWS_WITH_AS(load_model(dir / "tampered.mmdl"), doctest::Contains("checksum"), IoError);

    // loading a MMEDA-I bundle as MMEDA-II names the kind mismatch
    const ModelBundle bundle = load_model(dir / "m1.mmdl");
    CHECK(bundle_kind(bundle) == "mmeda1");
    CHECK_THROWS_WITH_AS(mmeda2_from_bundle(bundle), doctest::Contains("kind mismatch"), ShapeError);
}

TEST_CASE("every model kind survives a bundle round trip") {
    Rng rng(33);
    const fs::path dir = temp_dir("allbundles");

    CmfModel cmf = make_cmf(6, {4, 3}, 2, rng);
    save_model(dir / "cmf.mmdl", to_bundle(cmf));
    const CmfModel cmf2 = cmf_from_bundle(load_model(dir / "cmf.mmdl"));
    CHECK(bit_equal(cmf2.row_factor, cmf.row_factor));
    CHECK(bit_equal(cmf2.col_factors[1], cmf.col_factors[1]));

    AemfModel aemf = make_aemf(5, 4, 3, 2, rng);
    save_model(dir / "aemf.mmdl", to_bundle(aemf));
    const AemfModel aemf2 = aemf_from_bundle(load_model(dir / "aemf.mmdl"));
    CHECK(bit_equal(aemf2.row_ae.encoder[0].weight, aemf.row_ae.encoder[0].weight));

    ConvAE convae = make_conv_ae(1, 8, 8, 4, rng);
    save_model(dir / "convae.mmdl", to_bundle(convae));
    ConvAE convae2 = conv_ae_from_bundle(load_model(dir / "convae.mmdl"));
    Tensor images = testsupport::random_tensor({2, 1, 8, 8}, rng);
    CHECK(bit_equal(embed(convae, images), embed(convae2, images)));

    MlpModel mlp = make_mlp(7, false, rng);
    save_model(dir / "mlp.mmdl", to_bundle(mlp));
    const MlpModel mlp2 = mlp_from_bundle(load_model(dir / "mlp.mmdl"));
    CHECK(bit_equal(mlp2.head.weight, mlp.head.weight));
    CHECK_FALSE(mlp2.classification);
}
