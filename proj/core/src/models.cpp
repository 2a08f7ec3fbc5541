#include "mmrl/models.hpp"

#include <json.hpp>

#include "mmrl/errors.hpp"

namespace mmrl {

using nlohmann::json;

ModelKind parse_model_kind(const std::string& name) {
    if (name == "cmf") return ModelKind::cmf;
    if (name == "aemf") return ModelKind::aemf;
    if (name == "convae") return ModelKind::convae;
    if (name == "mmeda1") return ModelKind::mmeda1;
    if (name == "mmeda2") return ModelKind::mmeda2;
    if (name == "mlp") return ModelKind::mlp;
    throw ValueError("unknown model kind '" + name + "' (expected cmf, aemf, convae, mmeda1, mmeda2 or mlp)");
}

const char* model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::cmf: return "cmf";
        case ModelKind::aemf: return "aemf";
        case ModelKind::convae: return "convae";
        case ModelKind::mmeda1: return "mmeda1";
        case ModelKind::mmeda2: return "mmeda2";
        case ModelKind::mlp: return "mlp";
    }
    return "?";
}

namespace {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

Activation parse_activation(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    throw ValueError("unknown activation '" + name + "'");
}

// Linear stack with ReLU between layers and a linear final layer.
Var run_stack(Tape& tape, ParamBinder& binder, std::vector<LinearLayer>& layers, Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = forward_linear(tape, binder, layers[i], x);
        if (i + 1 < layers.size()) x = tape.relu(x);
    }
    return x;
}

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

void collect(NamedParams& out, const std::string& prefix, LinearLayer& layer) {
    out.emplace_back(prefix + ".weight", &layer.weight);
    out.emplace_back(prefix + ".bias", &layer.bias);
}

void collect(NamedParams& out, const std::string& prefix, Conv2dLayer& layer) {
    out.emplace_back(prefix + ".weight", &layer.weight);
    out.emplace_back(prefix + ".bias", &layer.bias);
}

void collect(NamedParams& out, const std::string& prefix, VanillaAE& ae) {
    for (std::size_t i = 0; i < ae.encoder.size(); ++i) collect(out, prefix + ".enc" + std::to_string(i), ae.encoder[i]);
    for (std::size_t i = 0; i < ae.decoder.size(); ++i) collect(out, prefix + ".dec" + std::to_string(i), ae.decoder[i]);
}

void collect(NamedParams& out, const std::string& prefix, ConvAE& ae) {
    collect(out, prefix + ".conv1", ae.conv1);
    collect(out, prefix + ".conv2", ae.conv2);
    collect(out, prefix + ".fc1", ae.fc1);
    collect(out, prefix + ".fc2", ae.fc2);
    collect(out, prefix + ".dfc1", ae.dfc1);
    collect(out, prefix + ".dfc2", ae.dfc2);
    collect(out, prefix + ".dconv1", ae.dconv1);
    collect(out, prefix + ".dconv2", ae.dconv2);
}

void collect(NamedParams& out, const std::string& prefix, FeedForward& net) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) collect(out, prefix + ".fc" + std::to_string(i), net.layers[i]);
}

ModelBundle bundle_from(const json& architecture, const NamedParams& params) {
    ModelBundle bundle;
    bundle.architecture = architecture.dump();
    for (const auto& [name, tensor] : params) bundle.params.emplace_back(name, *tensor);
    return bundle;
}

void fill_from_bundle(const ModelBundle& bundle, const NamedParams& params) {
    for (const auto& [name, tensor] : params) {
        const Tensor& stored = bundle.param(name);
        if (!stored.same_shape(*tensor)) {
            throw ShapeError("bundle parameter '" + name + "' has shape " + shape_string(stored.shape()) +
                             ", model expects " + shape_string(tensor->shape()));
        }
        *tensor = stored;
    }
}

json parse_architecture(const ModelBundle& bundle, const char* expected_kind) {
    const json j = json::parse(bundle.architecture, nullptr, false);
    if (j.is_discarded()) throw IoError("model bundle architecture is not valid JSON");
    const std::string kind = j.value("kind", "");
    if (kind != expected_kind) {
        throw ShapeError(std::string("architecture kind mismatch: bundle holds '") + kind + "', expected '" +
                         expected_kind + "'");
    }
    return j;
}

}  // namespace

// --------------------------------------------------------------------------
// VanillaAE

VanillaAE make_vanilla_ae(std::size_t input_dim, std::size_t embed_dim, Rng& rng) {
    if (input_dim < 1 || embed_dim < 1) throw ValueError("make_vanilla_ae: dimensions must be positive");
    VanillaAE ae;
    ae.input_dim = input_dim;
    ae.embed_dim = embed_dim;
    ae.encoder.push_back(init_linear(input_dim, embed_dim, rng));
    ae.decoder.push_back(init_linear(embed_dim, input_dim, rng));
    return ae;
}

Var vanilla_ae_encode(Tape& tape, ParamBinder& binder, VanillaAE& ae, Var x) {
    if (x.value().ndim() != 2 || x.value().extent(1) != ae.input_dim) {
        throw ShapeError("vanilla autoencoder expects [N x " + std::to_string(ae.input_dim) + "], got " +
                         shape_string(x.value().shape()));
    }
    return run_stack(tape, binder, ae.encoder, x);
}

Var vanilla_ae_decode(Tape& tape, ParamBinder& binder, VanillaAE& ae, Var embedding) {
    return run_stack(tape, binder, ae.decoder, embedding);
}

AeOutputs vanilla_ae_forward(Tape& tape, ParamBinder& binder, VanillaAE& ae, Var x) {
    Var emb = vanilla_ae_encode(tape, binder, ae, x);
    return {emb, vanilla_ae_decode(tape, binder, ae, emb)};
}

// --------------------------------------------------------------------------
// ConvAE

ConvAE make_conv_ae(std::size_t channels, std::size_t height, std::size_t width, std::size_t embed_dim,
                    Rng& rng) {
    if (channels < 1 || embed_dim < 1) throw ValueError("make_conv_ae: dimensions must be positive");
    if (height < 4 || width < 4) {
        throw ShapeError("make_conv_ae: input too small for two pooling stages, minimum extent is 4, got " +
                         std::to_string(height) + "x" + std::to_string(width));
    }
    ConvAE ae;
    ae.channels = channels;
    ae.height = height;
    ae.width = width;
    ae.embed_dim = embed_dim;
    ae.pool1_h = height / 2;
    ae.pool1_w = width / 2;
    ae.pool2_h = ae.pool1_h / 2;
    ae.pool2_w = ae.pool1_w / 2;
    ae.conv1 = init_conv2d(channels, ae.mid_channels, 3, 1, 1, rng);
    ae.conv2 = init_conv2d(ae.mid_channels, ae.deep_channels, 3, 1, 1, rng);
    ae.fc1 = init_linear(ae.flat_dim(), 4 * embed_dim, rng);
    ae.fc2 = init_linear(4 * embed_dim, embed_dim, rng);
    ae.dfc1 = init_linear(embed_dim, 4 * embed_dim, rng);
    ae.dfc2 = init_linear(4 * embed_dim, ae.flat_dim(), rng);
    ae.dconv1 = init_conv2d(ae.deep_channels, ae.mid_channels, 3, 1, 1, rng);
    ae.dconv2 = init_conv2d(ae.mid_channels, channels, 3, 1, 1, rng);
    return ae;
}

Var conv_ae_encode(Tape& tape, ParamBinder& binder, ConvAE& ae, Var x) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 4 || xv.extent(1) != ae.channels || xv.extent(2) != ae.height ||
        xv.extent(3) != ae.width) {
        throw ShapeError("conv autoencoder expects [N x " + std::to_string(ae.channels) + " x " +
                         std::to_string(ae.height) + " x " + std::to_string(ae.width) + "], got " +
                         shape_string(xv.shape()));
    }
    const std::size_t n = xv.extent(0);
    Var h = tape.relu(forward_conv2d(tape, binder, ae.conv1, x));
    h = tape.maxpool2d(h, 2, 2);
    h = tape.relu(forward_conv2d(tape, binder, ae.conv2, h));
    h = tape.maxpool2d(h, 2, 2);
    h = tape.reshape(h, {n, ae.flat_dim()});
    h = tape.relu(forward_linear(tape, binder, ae.fc1, h));
    return forward_linear(tape, binder, ae.fc2, h);
}

Var conv_ae_decode(Tape& tape, ParamBinder& binder, ConvAE& ae, Var embedding) {
    const std::size_t n = embedding.value().extent(0);
    Var h = tape.relu(forward_linear(tape, binder, ae.dfc1, embedding));
    h = tape.relu(forward_linear(tape, binder, ae.dfc2, h));
    h = tape.reshape(h, {n, ae.deep_channels, ae.pool2_h, ae.pool2_w});
    h = tape.upsample_nearest2d(h, ae.pool1_h, ae.pool1_w);
    h = tape.relu(forward_conv2d(tape, binder, ae.dconv1, h));
    h = tape.upsample_nearest2d(h, ae.height, ae.width);
    return forward_conv2d(tape, binder, ae.dconv2, h);
}

AeOutputs conv_ae_forward(Tape& tape, ParamBinder& binder, ConvAE& ae, Var x) {
    Var emb = conv_ae_encode(tape, binder, ae, x);
    return {emb, conv_ae_decode(tape, binder, ae, emb)};
}

// --------------------------------------------------------------------------
// CMF

CmfModel make_cmf(std::size_t rows, const std::vector<std::size_t>& col_dims, std::size_t embed_dim,
                  Rng& rng) {
    if (rows < 1 || embed_dim < 1 || col_dims.empty()) {
        throw ValueError("make_cmf: need positive rows, embed_dim and at least one matrix");
    }
    CmfModel model;
    model.embed_dim = embed_dim;
    model.row_factor = Tensor({rows, embed_dim});
    // Factors start small but nonzero; all-zero factors are a saddle point.
    for (double& v : model.row_factor.values()) v = rng.uniform(-0.1, 0.1);
    for (std::size_t dim : col_dims) {
        Tensor f({dim, embed_dim});
        for (double& v : f.values()) v = rng.uniform(-0.1, 0.1);
        model.col_factors.push_back(std::move(f));
        model.links.push_back(Activation::identity);
    }
    return model;
}

Var cmf_forward(Tape& tape, ParamBinder& binder, CmfModel& model, std::size_t matrix_index) {
    if (matrix_index >= model.col_factors.size()) {
        throw ValueError("cmf_forward: matrix index " + std::to_string(matrix_index) + " out of range (" +
                         std::to_string(model.col_factors.size()) + " matrices)");
    }
    Var u_row = binder.bind(model.row_factor);
    Var u_col = binder.bind(model.col_factors[matrix_index]);
    Var product = tape.matmul(u_row, tape.transpose2d(u_col));
    return tape.activation(product, model.links[matrix_index]);
}

LossBreakdown cmf_loss(Tape& tape, ParamBinder& binder, CmfModel& model, std::span<const Tensor> matrices) {
    if (matrices.size() != model.col_factors.size()) {
        throw ShapeError("cmf_loss: " + std::to_string(matrices.size()) + " matrices for " +
                         std::to_string(model.col_factors.size()) + " column factors");
    }
    LossBreakdown loss;
    for (std::size_t m = 0; m < matrices.size(); ++m) {
        Var recon = cmf_forward(tape, binder, model, m);
        Var term = tape.mse_loss(recon, matrices[m]);
        loss.terms.emplace_back("m" + std::to_string(m), term);
        loss.total = m == 0 ? term : tape.add(loss.total, term);
    }
    return loss;
}

// --------------------------------------------------------------------------
// AE-based matrix factorization

AemfModel make_aemf(std::size_t dim_a, std::size_t dim_b, std::size_t batch_rows, std::size_t embed_dim,
                    Rng& rng) {
    if (batch_rows < 1) throw ValueError("make_aemf: batch_rows must be positive");
    AemfModel model;
    model.dim_a = dim_a;
    model.dim_b = dim_b;
    model.batch_rows = batch_rows;
    model.embed_dim = embed_dim;
    model.row_ae = make_vanilla_ae(dim_a + dim_b, embed_dim, rng);
    model.col_ae_a = make_vanilla_ae(batch_rows, embed_dim, rng);
    model.col_ae_b = make_vanilla_ae(batch_rows, embed_dim, rng);
    return model;
}

AemfOutputs aemf_forward(Tape& tape, ParamBinder& binder, AemfModel& model, Var x_cat, Var xa_t, Var xb_t) {
    AemfOutputs out;
    AeOutputs row = vanilla_ae_forward(tape, binder, model.row_ae, x_cat);
    AeOutputs col_a = vanilla_ae_forward(tape, binder, model.col_ae_a, xa_t);
    AeOutputs col_b = vanilla_ae_forward(tape, binder, model.col_ae_b, xb_t);
    out.row_emb = row.embedding;
    out.col_emb_a = col_a.embedding;
    out.col_emb_b = col_b.embedding;
    out.recon_cat = row.reconstruction;
    out.col_recon_a = col_a.reconstruction;
    out.col_recon_b = col_b.reconstruction;
    out.recon_a = tape.matmul(out.row_emb, tape.transpose2d(out.col_emb_a));
    out.recon_b = tape.matmul(out.row_emb, tape.transpose2d(out.col_emb_b));
    return out;
}

LossBreakdown aemf_loss(Tape& tape, const AemfOutputs& out, const Tensor& xa, const Tensor& xb,
                        const Tensor& x_cat, const Tensor& xa_t, const Tensor& xb_t) {
    LossBreakdown loss;
    const std::pair<const char*, Var> entries[] = {
        {"prod_a", tape.mse_loss(out.recon_a, xa)},     {"prod_b", tape.mse_loss(out.recon_b, xb)},
        {"row_ae", tape.mse_loss(out.recon_cat, x_cat)}, {"col_ae_a", tape.mse_loss(out.col_recon_a, xa_t)},
        {"col_ae_b", tape.mse_loss(out.col_recon_b, xb_t)},
    };
    for (const auto& [name, term] : entries) {
        loss.terms.emplace_back(name, term);
        loss.total = loss.total.valid() ? tape.add(loss.total, term) : term;
    }
    return loss;
}

// --------------------------------------------------------------------------
// Fusion

FeedForward make_fusion(std::size_t embed_dim, Rng& rng) {
    // One affine layer 2d -> d. A ReLU hidden layer here warps the final
    // representation nonlinearly, which measurably hurts both the product
    // reconstruction it feeds and the linear downstream readout.
    FeedForward net;
    net.layers.push_back(init_linear(2 * embed_dim, embed_dim, rng));
    return net;
}

Var feed_forward(Tape& tape, ParamBinder& binder, FeedForward& net, Var x) {
    return run_stack(tape, binder, net.layers, x);
}

// --------------------------------------------------------------------------
// MMEDA-I

Mmeda1Model make_mmeda1(std::size_t channels, std::size_t height, std::size_t width, std::size_t feature_dim,
                        std::size_t batch_rows, std::size_t embed_dim, Rng& rng) {
    Mmeda1Model model;
    model.feature_dim = feature_dim;
    model.batch_rows = batch_rows;
    model.embed_dim = embed_dim;
    model.image_ae = make_conv_ae(channels, height, width, embed_dim, rng);
    model.row_encoder = init_linear(feature_dim, embed_dim, rng);
    model.col_encoder = init_linear(batch_rows, embed_dim, rng);
    model.fusion = make_fusion(embed_dim, rng);
    return model;
}

Mmeda1Outputs mmeda1_forward(Tape& tape, ParamBinder& binder, Mmeda1Model& model, Var x0, Var x1) {
    const Tensor& x1v = x1.value();
    if (x1v.ndim() != 2 || x1v.extent(1) != model.feature_dim) {
        throw ShapeError("mmeda1_forward: X1 must be [b x " + std::to_string(model.feature_dim) + "], got " +
                         shape_string(x1v.shape()));
    }
    if (x0.value().extent(0) != x1v.extent(0)) {
        throw ShapeError("mmeda1_forward: X0 and X1 row counts differ, " +
                         shape_string(x0.value().shape()) + " vs " + shape_string(x1v.shape()));
    }
    if (x1v.extent(0) != model.batch_rows) {
        throw ShapeError("mmeda1_forward: column encoder is built for batches of " +
                         std::to_string(model.batch_rows) + " rows, got " + std::to_string(x1v.extent(0)));
    }
    Mmeda1Outputs out;
    Var conv_emb = conv_ae_encode(tape, binder, model.image_ae, x0);
    Var row_emb = forward_linear(tape, binder, model.row_encoder, x1);
    Var col_emb = forward_linear(tape, binder, model.col_encoder, tape.transpose2d(x1));
    out.rep = feed_forward(tape, binder, model.fusion, tape.concat(conv_emb, row_emb));
    out.x0_recon = conv_ae_decode(tape, binder, model.image_ae, out.rep);
    out.x1_recon = tape.matmul(out.rep, tape.transpose2d(col_emb));
    return out;
}

LossBreakdown mmeda1_loss(Tape& tape, const Mmeda1Outputs& out, const Tensor& x0, const Tensor& x1) {
    LossBreakdown loss;
    Var t0 = tape.mse_loss(out.x0_recon, x0);
    Var t1 = tape.mse_loss(out.x1_recon, x1);
    loss.terms.emplace_back("x0", t0);
    loss.terms.emplace_back("x1", t1);
    loss.total = tape.add(t0, t1);
    return loss;
}

// --------------------------------------------------------------------------
// MMEDA-II

Mmeda2Model make_mmeda2(std::size_t channels, std::size_t height, std::size_t width, std::size_t feature_dim,
                        std::size_t batch_rows, std::size_t embed_dim, Rng& rng) {
    Mmeda2Model model;
    model.feature_dim = feature_dim;
    model.batch_rows = batch_rows;
    model.embed_dim = embed_dim;
    model.ae0 = make_conv_ae(channels, height, width, embed_dim, rng);
    model.ae1 = make_vanilla_ae(feature_dim, embed_dim, rng);
    model.ae2 = make_vanilla_ae(batch_rows, embed_dim, rng);
    model.fusion = make_fusion(embed_dim, rng);
    return model;
}

Mmeda2Outputs mmeda2_forward(Tape& tape, ParamBinder& binder, Mmeda2Model& model, Var x0, Var x1, Var x2) {
    const Tensor& x0v = x0.value();
    const Tensor& x1v = x1.value();
    const Tensor& x2v = x2.value();
    if (x1v.ndim() != 2 || x1v.extent(1) != model.feature_dim) {
        throw ShapeError("mmeda2_forward: X1 must be [b x " + std::to_string(model.feature_dim) + "], got " +
                         shape_string(x1v.shape()));
    }
    if (x0v.ndim() != 4 || x0v.extent(0) != x1v.extent(0)) {
        throw ShapeError("mmeda2_forward: X0 must be an image batch with the row count of X1, got X0 " +
                         shape_string(x0v.shape()) + " vs X1 " + shape_string(x1v.shape()));
    }
    if (x1v.extent(0) != model.batch_rows) {
        throw ShapeError("mmeda2_forward: AE2 is built for batches of " + std::to_string(model.batch_rows) +
                         " rows, X1 has " + std::to_string(x1v.extent(0)));
    }
    if (x2v.ndim() != 2 || x2v.extent(1) != model.batch_rows) {
        throw ShapeError("mmeda2_forward: X2 must be [c x " + std::to_string(model.batch_rows) + "], got " +
                         shape_string(x2v.shape()));
    }
    if (x2v.extent(0) > model.feature_dim) {
        throw ShapeError("mmeda2_forward: X2 has " + std::to_string(x2v.extent(0)) +
                         " rows but X1 only has " + std::to_string(model.feature_dim) + " columns");
    }
    Mmeda2Outputs out;
    AeOutputs ae0 = conv_ae_forward(tape, binder, model.ae0, x0);
    AeOutputs ae1 = vanilla_ae_forward(tape, binder, model.ae1, x1);
    AeOutputs ae2 = vanilla_ae_forward(tape, binder, model.ae2, x2);
    out.x0_recon = ae0.reconstruction;
    out.x1_recon = ae1.reconstruction;
    out.x2_recon = ae2.reconstruction;
    out.rep = feed_forward(tape, binder, model.fusion, tape.concat(ae0.embedding, ae1.embedding));
    out.x1_cross = tape.matmul(out.rep, tape.transpose2d(ae2.embedding));
    return out;
}

LossBreakdown mmeda2_loss(Tape& tape, const Mmeda2Outputs& out, const Tensor& x0, const Tensor& x1,
                          const Tensor& x2, const Tensor& x1_block) {
    if (!out.x1_cross.value().same_shape(x1_block)) {
        throw ShapeError("mmeda2_loss: X1'' is " + shape_string(out.x1_cross.value().shape()) +
                         " but the X1 column block is " + shape_string(x1_block.shape()));
    }
    LossBreakdown loss;
    Var t0 = tape.mse_loss(out.x0_recon, x0);
    Var t1 = tape.mse_loss(out.x1_recon, x1);
    Var t2 = tape.mse_loss(out.x2_recon, x2);
    Var t3 = tape.mse_loss(out.x1_cross, x1_block);
    loss.terms.emplace_back("x0", t0);
    loss.terms.emplace_back("x1", t1);
    loss.terms.emplace_back("x2", t2);
    loss.terms.emplace_back("x1pp", t3);
    loss.total = tape.add(tape.add(tape.add(t0, t1), t2), t3);
    return loss;
}

// --------------------------------------------------------------------------
// MLP

MlpModel make_mlp(std::size_t input_dim, bool classification, Rng& rng) {
    MlpModel model;
    model.input_dim = input_dim;
    model.classification = classification;
    model.hidden.push_back(init_linear(input_dim, 128, rng));
    model.hidden.push_back(init_linear(128, 64, rng));
    model.head = init_linear(64, classification ? 2 : 1, rng);
    return model;
}

Var mlp_hidden(Tape& tape, ParamBinder& binder, MlpModel& model, Var x) {
    if (x.value().ndim() != 2 || x.value().extent(1) != model.input_dim) {
        throw ShapeError("mlp expects [N x " + std::to_string(model.input_dim) + "], got " +
                         shape_string(x.value().shape()));
    }
    Var h = x;
    for (LinearLayer& layer : model.hidden) h = tape.relu(forward_linear(tape, binder, layer, h));
    return h;
}

Var mlp_forward(Tape& tape, ParamBinder& binder, MlpModel& model, Var x) {
    return forward_linear(tape, binder, model.head, mlp_hidden(tape, binder, model, x));
}

// --------------------------------------------------------------------------
// Embedding (inference)

Tensor embed(Mmeda1Model& model, const Tensor& m0, const Tensor& m1) {
    Tape tape;
    ParamBinder binder(tape);
    Var x0 = tape.leaf(m0);
    Var x1 = tape.leaf(m1);
    Var conv_emb = conv_ae_encode(tape, binder, model.image_ae, x0);
    Var row_emb = forward_linear(tape, binder, model.row_encoder, x1);
    return feed_forward(tape, binder, model.fusion, tape.concat(conv_emb, row_emb)).value();
}

Tensor embed(Mmeda2Model& model, const Tensor& m0, const Tensor& m1) {
    Tape tape;
    ParamBinder binder(tape);
    Var x0 = tape.leaf(m0);
    Var x1 = tape.leaf(m1);
    Var emb0 = conv_ae_encode(tape, binder, model.ae0, x0);
    Var emb1 = vanilla_ae_encode(tape, binder, model.ae1, x1);
    return feed_forward(tape, binder, model.fusion, tape.concat(emb0, emb1)).value();
}

Tensor embed(ConvAE& model, const Tensor& m0) {
    Tape tape;
    ParamBinder binder(tape);
    return conv_ae_encode(tape, binder, model, tape.leaf(m0)).value();
}

Tensor embed(AemfModel& model, const Tensor& m0_flat, const Tensor& m1) {
    Tape tape;
    ParamBinder binder(tape);
    Var x = tape.leaf(concat_cols(m0_flat, m1));
    return vanilla_ae_encode(tape, binder, model.row_ae, x).value();
}

Tensor embed(const CmfModel& model) { return model.row_factor; }

Tensor embed(MlpModel& model, const Tensor& features) {
    Tape tape;
    ParamBinder binder(tape);
    return mlp_hidden(tape, binder, model, tape.leaf(features)).value();
}

// --------------------------------------------------------------------------
// Bundles

ModelBundle to_bundle(const CmfModel& model) {
    json arch;
    arch["kind"] = "cmf";
    arch["rows"] = model.row_factor.extent(0);
    arch["embed_dim"] = model.embed_dim;
    std::vector<std::size_t> col_dims;
    std::vector<std::string> links;
    for (const Tensor& f : model.col_factors) col_dims.push_back(f.extent(0));
    for (Activation a : model.links) links.emplace_back(activation_name(a));
    arch["col_dims"] = col_dims;
    arch["links"] = links;
    NamedParams params;
    auto& mutable_model = const_cast<CmfModel&>(model);
    params.emplace_back("row_factor", &mutable_model.row_factor);
    for (std::size_t m = 0; m < model.col_factors.size(); ++m) {
        params.emplace_back("col_factor" + std::to_string(m), &mutable_model.col_factors[m]);
    }
    return bundle_from(arch, params);
}

CmfModel cmf_from_bundle(const ModelBundle& bundle) {
    const json arch = parse_architecture(bundle, "cmf");
    Rng rng(0);
    CmfModel model = make_cmf(arch.at("rows").get<std::size_t>(),
                              arch.at("col_dims").get<std::vector<std::size_t>>(),
                              arch.at("embed_dim").get<std::size_t>(), rng);
    const auto links = arch.at("links").get<std::vector<std::string>>();
    for (std::size_t m = 0; m < links.size() && m < model.links.size(); ++m) {
        model.links[m] = parse_activation(links[m]);
    }
    NamedParams params;
    params.emplace_back("row_factor", &model.row_factor);
    for (std::size_t m = 0; m < model.col_factors.size(); ++m) {
        params.emplace_back("col_factor" + std::to_string(m), &model.col_factors[m]);
    }
    fill_from_bundle(bundle, params);
    return model;
}

ModelBundle to_bundle(const AemfModel& model) {
    json arch;
    arch["kind"] = "aemf";
    arch["dim_a"] = model.dim_a;
    arch["dim_b"] = model.dim_b;
    arch["batch_rows"] = model.batch_rows;
    arch["embed_dim"] = model.embed_dim;
    NamedParams params;
    auto& m = const_cast<AemfModel&>(model);
    collect(params, "row_ae", m.row_ae);
    collect(params, "col_ae_a", m.col_ae_a);
    collect(params, "col_ae_b", m.col_ae_b);
    return bundle_from(arch, params);
}

AemfModel aemf_from_bundle(const ModelBundle& bundle) {
    const json arch = parse_architecture(bundle, "aemf");
    Rng rng(0);
    AemfModel model = make_aemf(arch.at("dim_a").get<std::size_t>(), arch.at("dim_b").get<std::size_t>(),
                                arch.at("batch_rows").get<std::size_t>(),
                                arch.at("embed_dim").get<std::size_t>(), rng);
    NamedParams params;
    collect(params, "row_ae", model.row_ae);
    collect(params, "col_ae_a", model.col_ae_a);
    collect(params, "col_ae_b", model.col_ae_b);
    fill_from_bundle(bundle, params);
    return model;
}

ModelBundle to_bundle(const ConvAE& model) {
    json arch;
    arch["kind"] = "convae";
    arch["channels"] = model.channels;
    arch["height"] = model.height;
    arch["width"] = model.width;
    arch["embed_dim"] = model.embed_dim;
    NamedParams params;
    collect(params, "ae", const_cast<ConvAE&>(model));
    return bundle_from(arch, params);
}

ConvAE conv_ae_from_bundle(const ModelBundle& bundle) {
    const json arch = parse_architecture(bundle, "convae");
    Rng rng(0);
    ConvAE model = make_conv_ae(arch.at("channels").get<std::size_t>(), arch.at("height").get<std::size_t>(),
                                arch.at("width").get<std::size_t>(), arch.at("embed_dim").get<std::size_t>(),
                                rng);
    NamedParams params;
    collect(params, "ae", model);
    fill_from_bundle(bundle, params);
    return model;
}

namespace {

json mmeda_arch(const char* kind, std::size_t channels, std::size_t height, std::size_t width,
                std::size_t feature_dim, std::size_t batch_rows, std::size_t embed_dim) {
    json arch;
    arch["kind"] = kind;
    arch["channels"] = channels;
    arch["height"] = height;
    arch["width"] = width;
    arch["feature_dim"] = feature_dim;
    arch["batch_rows"] = batch_rows;
    arch["embed_dim"] = embed_dim;
    return arch;
}

}  // namespace

ModelBundle to_bundle(const Mmeda1Model& model) {
    const json arch = mmeda_arch("mmeda1", model.image_ae.channels, model.image_ae.height,
                                 model.image_ae.width, model.feature_dim, model.batch_rows, model.embed_dim);
    NamedParams params;
    auto& m = const_cast<Mmeda1Model&>(model);
    collect(params, "image_ae", m.image_ae);
    collect(params, "row_encoder", m.row_encoder);
    collect(params, "col_encoder", m.col_encoder);
    collect(params, "fusion", m.fusion);
    return bundle_from(arch, params);
}

Mmeda1Model mmeda1_from_bundle(const ModelBundle& bundle) {
    const json arch = parse_architecture(bundle, "mmeda1");
    Rng rng(0);
    Mmeda1Model model = make_mmeda1(
        arch.at("channels").get<std::size_t>(), arch.at("height").get<std::size_t>(),
        arch.at("width").get<std::size_t>(), arch.at("feature_dim").get<std::size_t>(),
        arch.at("batch_rows").get<std::size_t>(), arch.at("embed_dim").get<std::size_t>(), rng);
    NamedParams params;
    collect(params, "image_ae", model.image_ae);
    collect(params, "row_encoder", model.row_encoder);
    collect(params, "col_encoder", model.col_encoder);
    collect(params, "fusion", model.fusion);
    fill_from_bundle(bundle, params);
    return model;
}

ModelBundle to_bundle(const Mmeda2Model& model) {
    const json arch = mmeda_arch("mmeda2", model.ae0.channels, model.ae0.height, model.ae0.width,
                                 model.feature_dim, model.batch_rows, model.embed_dim);
    NamedParams params;
    auto& m = const_cast<Mmeda2Model&>(model);
    collect(params, "ae0", m.ae0);
    collect(params, "ae1", m.ae1);
    collect(params, "ae2", m.ae2);
    collect(params, "fusion", m.fusion);
    return bundle_from(arch, params);
}

Mmeda2Model mmeda2_from_bundle(const ModelBundle& bundle) {
    const json arch = parse_architecture(bundle, "mmeda2");
    Rng rng(0);
    Mmeda2Model model = make_mmeda2(
        arch.at("channels").get<std::size_t>(), arch.at("height").get<std::size_t>(),
        arch.at("width").get<std::size_t>(), arch.at("feature_dim").get<std::size_t>(),
        arch.at("batch_rows").get<std::size_t>(), arch.at("embed_dim").get<std::size_t>(), rng);
    NamedParams params;
    collect(params, "ae0", model.ae0);
    collect(params, "ae1", model.ae1);
    collect(params, "ae2", model.ae2);
    collect(params, "fusion", model.fusion);
    fill_from_bundle(bundle, params);
    return model;
}

ModelBundle to_bundle(const MlpModel& model) {
    json arch;
    arch["kind"] = "mlp";
    arch["input_dim"] = model.input_dim;
    arch["classification"] = model.classification;
    NamedParams params;
    auto& m = const_cast<MlpModel&>(model);
    for (std::size_t i = 0; i < m.hidden.size(); ++i) collect(params, "hidden" + std::to_string(i), m.hidden[i]);
    collect(params, "head", m.head);
    return bundle_from(arch, params);
}

MlpModel mlp_from_bundle(const ModelBundle& bundle) {
    const json arch = parse_architecture(bundle, "mlp");
    Rng rng(0);
    MlpModel model =
        make_mlp(arch.at("input_dim").get<std::size_t>(), arch.at("classification").get<bool>(), rng);
    NamedParams params;
    for (std::size_t i = 0; i < model.hidden.size(); ++i) collect(params, "hidden" + std::to_string(i), model.hidden[i]);
    collect(params, "head", model.head);
    fill_from_bundle(bundle, params);
    return model;
}

}  // namespace mmrl
