#include "mmrl/data.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "mmrl/errors.hpp"
#include "mmrl/rng.hpp"
#include "mmrl/serialize.hpp"

namespace mmrl {

using nlohmann::json;

namespace {

// Fixed smooth spatial basis: 2-D cosine modes enumerated diagonally so low
// mode indices stay low-frequency.
double cosine_mode(std::size_t mode, std::size_t h, std::size_t w, std::size_t height, std::size_t width) {
    std::size_t diag = 0, base = 0;
    while (base + diag + 1 <= mode) {
        ++diag;
        base += diag;
    }
    const std::size_t p = mode - base;
    const std::size_t q = diag - p;
    const double fy = std::cos(std::numbers::pi * static_cast<double>(p + 1) *
                               (static_cast<double>(h) + 0.5) / static_cast<double>(height));
    const double fx = std::cos(std::numbers::pi * static_cast<double>(q + 1) *
                               (static_cast<double>(w) + 0.5) / static_cast<double>(width));
    return fy * fx;
}

// Unit vector with a canonical sign (first component nonnegative), so two
// draws with latent_dim 1 always point the same way.
std::vector<double> seeded_direction(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    const double flip = v[0] < 0.0 ? -1.0 : 1.0;
    for (double& x : v) x = flip * x / norm;
    return v;
}

}  // namespace

MultiModalDataset generate_synthetic(const SynthSpec& spec) {
    if (spec.n < 1 || spec.latent_dim < 1) throw ValueError("synthetic spec: n and rank must be positive");
    const std::size_t image_dim = spec.channels * spec.height * spec.width;
    if (spec.latent_dim > spec.feature_dim || spec.latent_dim > image_dim) {
        throw ValueError("synthetic spec: rank " + std::to_string(spec.latent_dim) +
                         " must not exceed feature dim " + std::to_string(spec.feature_dim) +
                         " or image dim " + std::to_string(image_dim));
    }
    if (spec.noise_sigma < 0.0) throw ValueError("synthetic spec: noise sigma must be nonnegative");

    Rng rng(spec.seed);
    const std::size_t n = spec.n, r = spec.latent_dim;

    Tensor latent({n, r});
    for (double& v : latent.values()) v = rng.normal();

    // Latent coordinates carry decaying salience, applied consistently to
    // both views and both supervision signals. Low-index coordinates dominate
    // the data's principal structure, so representations that capture it are
    // aligned with the coordinates the labels and targets depend on.
    std::vector<double> gain(r);
    for (std::size_t l = 0; l < r; ++l) gain[l] = std::pow(0.5, static_cast<double>(l));

    // M1 = Z.A + noise, A row l scaled by gain[l], columns normalized so M1
    // entries have roughly unit variance.
    Tensor mixing({r, spec.feature_dim});
    double gain_norm2 = 0.0;
    for (double g : gain) gain_norm2 += g * g;
    const double a_scale = 1.0 / std::sqrt(gain_norm2);
    for (std::size_t l = 0; l < r; ++l)
        for (std::size_t j = 0; j < spec.feature_dim; ++j) mixing(l, j) = a_scale * gain[l] * rng.normal();
    Tensor m1 = matmul(latent, mixing);
    if (spec.noise_sigma > 0.0) {
        for (double& v : m1.values()) v += spec.noise_sigma * rng.normal();
    }

    // M0: latent coordinate l modulates cosine mode (c*r + l) of the image.
    Tensor m0({n, spec.channels, spec.height, spec.width});
    const double img_scale = 1.0 / std::sqrt(gain_norm2);
    std::vector<double> basis(spec.channels * r * spec.height * spec.width);
    for (std::size_t c = 0; c < spec.channels; ++c)
        for (std::size_t l = 0; l < r; ++l)
            for (std::size_t h = 0; h < spec.height; ++h)
                for (std::size_t w = 0; w < spec.width; ++w) {
                    basis[((c * r + l) * spec.height + h) * spec.width + w] =
                        gain[l] * cosine_mode(c * r + l, h, w, spec.height, spec.width);
                }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < spec.channels; ++c)
            for (std::size_t h = 0; h < spec.height; ++h)
                for (std::size_t w = 0; w < spec.width; ++w) {
                    double acc = 0.0;
                    for (std::size_t l = 0; l < r; ++l) {
                        acc += latent(i, l) * basis[((c * r + l) * spec.height + h) * spec.width + w];
                    }
                    m0(i, c, h, w) = img_scale * acc;
                }
    if (spec.noise_sigma > 0.0) {
        for (double& v : m0.values()) v += spec.noise_sigma * rng.normal();
    }

    // The supervision directions share the views' salience profile: labels
    // and targets depend mostly on the coordinates that dominate both views,
    // mirroring the shared-entity premise the views are built on.
    std::vector<double> w_dir = seeded_direction(rng, r);
    std::vector<double> v_dir = seeded_direction(rng, r);
    for (std::size_t l = 0; l < r; ++l) {
        w_dir[l] *= gain[l];
        v_dir[l] *= gain[l];
    }

    MultiModalDataset dataset;
    dataset.m0 = std::move(m0);
    dataset.m1 = std::move(m1);
    dataset.labels.resize(n);
    dataset.targets.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double zw = 0.0, zv = 0.0;
        for (std::size_t l = 0; l < r; ++l) {
            zw += latent(i, l) * w_dir[l];
            zv += latent(i, l) * v_dir[l];
        }
        dataset.labels[i] = zw > 0.0 ? 1 : 0;
        dataset.targets[i] = zv + (spec.noise_sigma > 0.0 ? 0.1 * spec.noise_sigma * rng.normal() : 0.0);
    }
    dataset.entity_ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) dataset.entity_ids[i] = "e" + std::to_string(i);
    return dataset;
}

Split make_split(std::size_t n, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ValueError("split ratio must lie strictly between 0 and 1");
    if (n < 2) throw ValueError("split needs at least two rows");
    Rng rng(seed);
    std::vector<std::size_t> perm = rng.permutation(n);
    std::size_t train_n = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    if (train_n == 0) train_n = 1;
    if (train_n >= n) train_n = n - 1;
    Split split;
    split.ratio = ratio;
    split.seed = seed;
    split.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(train_n));
    split.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(train_n), perm.end());
    return split;
}

void save_dataset(const std::filesystem::path& dir, const MultiModalDataset& dataset,
                  const SynthSpec* generator_spec) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());

    write_tensor(dir / "m0.mmtf", dataset.m0);
    write_tensor(dir / "m1.mmtf", dataset.m1);

    json manifest;
    manifest["n"] = dataset.rows();
    manifest["views"]["m0"] = {{"file", "m0.mmtf"}, {"shape", dataset.m0.shape()}};
    manifest["views"]["m1"] = {{"file", "m1.mmtf"}, {"shape", dataset.m1.shape()}};
    if (dataset.has_labels()) {
        Tensor labels({dataset.labels.size()});
        for (std::size_t i = 0; i < dataset.labels.size(); ++i) labels[i] = dataset.labels[i];
        write_tensor(dir / "labels.mmtf", labels);
        manifest["labels"] = "labels.mmtf";
    }
    if (dataset.has_targets()) {
        Tensor targets({dataset.targets.size()});
        for (std::size_t i = 0; i < dataset.targets.size(); ++i) targets[i] = dataset.targets[i];
        write_tensor(dir / "targets.mmtf", targets);
        manifest["targets"] = "targets.mmtf";
    }
    manifest["entity_ids"] = dataset.entity_ids;
    if (generator_spec) {
        manifest["seed"] = generator_spec->seed;
        manifest["generator"] = {{"n", generator_spec->n},
                                 {"latent_dim", generator_spec->latent_dim},
                                 {"channels", generator_spec->channels},
                                 {"height", generator_spec->height},
                                 {"width", generator_spec->width},
                                 {"feature_dim", generator_spec->feature_dim},
                                 {"noise_sigma", generator_spec->noise_sigma},
                                 {"seed", generator_spec->seed}};
    }
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
    out.close();
    if (!out) throw IoError("failed writing " + (dir / "manifest.json").string());
}

MultiModalDataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("cannot open dataset manifest " + (dir / "manifest.json").string());
    json manifest = json::parse(in, nullptr, false);
    if (manifest.is_discarded()) throw IoError("dataset manifest is not valid JSON: " + dir.string());

    MultiModalDataset dataset;
    dataset.m0 = read_tensor(dir / manifest.at("views").at("m0").at("file").get<std::string>());
    dataset.m1 = read_tensor(dir / manifest.at("views").at("m1").at("file").get<std::string>());
    if (dataset.m0.ndim() != 4) {
        throw ShapeError("dataset view m0 must be [N x C x H x W], got " + shape_string(dataset.m0.shape()));
    }
    if (dataset.m1.ndim() != 2 || dataset.m1.extent(0) != dataset.m0.extent(0)) {
        throw ShapeError("dataset view m1 must be [N x n2] with N matching m0, got " +
                         shape_string(dataset.m1.shape()));
    }
    if (manifest.contains("labels")) {
        const Tensor labels = read_tensor(dir / manifest["labels"].get<std::string>());
        dataset.labels.resize(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) dataset.labels[i] = labels[i] > 0.5 ? 1 : 0;
    }
    if (manifest.contains("targets")) {
        const Tensor targets = read_tensor(dir / manifest["targets"].get<std::string>());
        dataset.targets.assign(targets.values().begin(), targets.values().end());
    }
    if (manifest.contains("entity_ids")) {
        dataset.entity_ids = manifest["entity_ids"].get<std::vector<std::string>>();
    }
    return dataset;
}

}  // namespace mmrl
