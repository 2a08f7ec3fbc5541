#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mmrl/autodiff.hpp"
#include "mmrl/nn.hpp"
#include "mmrl/rng.hpp"
#include "mmrl/serialize.hpp"
#include "mmrl/tensor.hpp"

namespace mmrl {

enum class ModelKind { cmf, aemf, convae, mmeda1, mmeda2, mlp };

ModelKind parse_model_kind(const std::string& name);
const char* model_kind_name(ModelKind kind);

/// Scalar loss plus its named components, all on the same tape.
struct LossBreakdown {
    Var total;
    std::vector<std::pair<std::string, Var>> terms;
};

// ---------------------------------------------------------------------------
// Vanilla autoencoder: linear encoder/decoder stacks with ReLU between hidden
// layers; the embedding and the reconstruction output stay linear.

struct VanillaAE {
    std::vector<LinearLayer> encoder;
    std::vector<LinearLayer> decoder;
    std::size_t input_dim = 0;
    std::size_t embed_dim = 0;
};

VanillaAE make_vanilla_ae(std::size_t input_dim, std::size_t embed_dim, Rng& rng);

Var vanilla_ae_encode(Tape& tape, ParamBinder& binder, VanillaAE& ae, Var x);
Var vanilla_ae_decode(Tape& tape, ParamBinder& binder, VanillaAE& ae, Var embedding);

struct AeOutputs {
    Var embedding;
    Var reconstruction;
};

AeOutputs vanilla_ae_forward(Tape& tape, ParamBinder& binder, VanillaAE& ae, Var x);

// ---------------------------------------------------------------------------
// Convolutional autoencoder. Encoder: two 3x3 stride-1 pad-1 convolutions
// (C -> 8 -> 16), each followed by ReLU and 2x2 max pooling, then two linear
// layers (flattened -> 4d -> d). Decoder mirrors the linear layers, then runs
// two nearest-neighbour-upsample + 3x3 convolution stages back to the input
// shape. Inputs need H, W >= 4 so both pooling stages fit.

struct ConvAE {
    Conv2dLayer conv1, conv2;
    LinearLayer fc1, fc2;    // encoder head
    LinearLayer dfc1, dfc2;  // decoder head (mirror)
    Conv2dLayer dconv1, dconv2;
    std::size_t channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t embed_dim = 0;
    std::size_t mid_channels = 8;
    std::size_t deep_channels = 16;
    std::size_t pool1_h = 0, pool1_w = 0;  // spatial dims after first pool
    std::size_t pool2_h = 0, pool2_w = 0;  // after second pool

    std::size_t flat_dim() const { return deep_channels * pool2_h * pool2_w; }
};

ConvAE make_conv_ae(std::size_t channels, std::size_t height, std::size_t width, std::size_t embed_dim,
                    Rng& rng);

Var conv_ae_encode(Tape& tape, ParamBinder& binder, ConvAE& ae, Var x);
Var conv_ae_decode(Tape& tape, ParamBinder& binder, ConvAE& ae, Var embedding);
AeOutputs conv_ae_forward(Tape& tape, ParamBinder& binder, ConvAE& ae, Var x);

// ---------------------------------------------------------------------------
// Collective matrix factorization: one shared row factor, one column factor
// and link function per matrix; matrix m is reconstructed as
// f_m(U_row . U_col_m^T).

struct CmfModel {
    Tensor row_factor;                // [N x d]
    std::vector<Tensor> col_factors;  // [n_m x d]
    std::vector<Activation> links;
    std::size_t embed_dim = 0;
};

CmfModel make_cmf(std::size_t rows, const std::vector<std::size_t>& col_dims, std::size_t embed_dim,
                  Rng& rng);

Var cmf_forward(Tape& tape, ParamBinder& binder, CmfModel& model, std::size_t matrix_index);
LossBreakdown cmf_loss(Tape& tape, ParamBinder& binder, CmfModel& model,
                       std::span<const Tensor> matrices);

// ---------------------------------------------------------------------------
// Autoencoder-based matrix factorization over two matrices sharing row
// entities. The row autoencoder sees the column-concatenated input; each
// column autoencoder sees one matrix transposed (samples of width b). Products
// of row and column embeddings reconstruct the original matrices.

struct AemfModel {
    VanillaAE row_ae;    // (dim_a + dim_b) -> d
    VanillaAE col_ae_a;  // batch_rows -> d
    VanillaAE col_ae_b;  // batch_rows -> d
    std::size_t dim_a = 0;
    std::size_t dim_b = 0;
    std::size_t batch_rows = 0;
    std::size_t embed_dim = 0;
};

AemfModel make_aemf(std::size_t dim_a, std::size_t dim_b, std::size_t batch_rows, std::size_t embed_dim,
                    Rng& rng);

struct AemfOutputs {
    Var row_emb;      // [b x d]
    Var col_emb_a;    // [n_a x d]
    Var col_emb_b;    // [n_b x d]
    Var recon_a;      // row_emb . col_emb_a^T
    Var recon_b;      // row_emb . col_emb_b^T
    Var recon_cat;    // row autoencoder reconstruction
    Var col_recon_a;  // column autoencoder reconstructions
    Var col_recon_b;
};

AemfOutputs aemf_forward(Tape& tape, ParamBinder& binder, AemfModel& model, Var x_cat, Var xa_t, Var xb_t);
LossBreakdown aemf_loss(Tape& tape, const AemfOutputs& out, const Tensor& xa, const Tensor& xb,
                        const Tensor& x_cat, const Tensor& xa_t, const Tensor& xb_t);

// ---------------------------------------------------------------------------
// Fusion network shared by the MMEDA models: one affine layer mapping the
// concatenated modality embeddings (2d) to the final representation (d).

struct FeedForward {
    std::vector<LinearLayer> layers;  // ReLU between layers, linear output
};

FeedForward make_fusion(std::size_t embed_dim, Rng& rng);
Var feed_forward(Tape& tape, ParamBinder& binder, FeedForward& net, Var x);

// ---------------------------------------------------------------------------
// MMEDA-I: conv autoencoder for the image view, row/column linear encoders
// for the feature view, fused representation. The conv decoder consumes the
// fused representation; the feature view is reconstructed as
// rep . col_encoder(X1^T)^T.

struct Mmeda1Model {
    ConvAE image_ae;
    LinearLayer row_encoder;  // feature_dim -> d
    LinearLayer col_encoder;  // batch_rows -> d
    FeedForward fusion;
    std::size_t feature_dim = 0;
    std::size_t batch_rows = 0;
    std::size_t embed_dim = 0;
};

Mmeda1Model make_mmeda1(std::size_t channels, std::size_t height, std::size_t width, std::size_t feature_dim,
                        std::size_t batch_rows, std::size_t embed_dim, Rng& rng);

struct Mmeda1Outputs {
    Var rep;       // [b x d]
    Var x0_recon;  // conv decode of rep
    Var x1_recon;  // rep . col_emb^T
};

Mmeda1Outputs mmeda1_forward(Tape& tape, ParamBinder& binder, Mmeda1Model& model, Var x0, Var x1);
LossBreakdown mmeda1_loss(Tape& tape, const Mmeda1Outputs& out, const Tensor& x0, const Tensor& x1);

// ---------------------------------------------------------------------------
// MMEDA-II: three autoencoders (conv AE0 on images, vanilla AE1 on features,
// vanilla AE2 on transposed feature slices) plus the fusion network. Each
// autoencoder reconstructs its own input from its own embedding; the fused
// representation produces the cross reconstruction X1'' = rep . enc2(X2)^T.

struct Mmeda2Model {
    ConvAE ae0;
    VanillaAE ae1;  // feature_dim -> d
    VanillaAE ae2;  // batch_rows -> d
    FeedForward fusion;
    std::size_t feature_dim = 0;
    std::size_t batch_rows = 0;
    std::size_t embed_dim = 0;
};

Mmeda2Model make_mmeda2(std::size_t channels, std::size_t height, std::size_t width, std::size_t feature_dim,
                        std::size_t batch_rows, std::size_t embed_dim, Rng& rng);

struct Mmeda2Outputs {
    Var rep;       // [b x d]
    Var x0_recon;  // X0'
    Var x1_recon;  // X1'
    Var x2_recon;  // X2'
    Var x1_cross;  // X1'' = rep . enc2(X2)^T, [b x c]
};

Mmeda2Outputs mmeda2_forward(Tape& tape, ParamBinder& binder, Mmeda2Model& model, Var x0, Var x1, Var x2);
LossBreakdown mmeda2_loss(Tape& tape, const Mmeda2Outputs& out, const Tensor& x0, const Tensor& x1,
                          const Tensor& x2, const Tensor& x1_block);

// ---------------------------------------------------------------------------
// Supervised MLP baseline on concatenated per-entity features. Two hidden
// layers (128, 64) with ReLU; the head emits 2 class logits or 1 scalar.

struct MlpModel {
    std::vector<LinearLayer> hidden;
    LinearLayer head;
    bool classification = true;
    std::size_t input_dim = 0;
};

MlpModel make_mlp(std::size_t input_dim, bool classification, Rng& rng);

Var mlp_hidden(Tape& tape, ParamBinder& binder, MlpModel& model, Var x);
Var mlp_forward(Tape& tape, ParamBinder& binder, MlpModel& model, Var x);

// ---------------------------------------------------------------------------
// Inference path: encoders plus fusion only, no batch-coupled state, so the
// result is independent of how rows are partitioned at training time.

Tensor embed(Mmeda1Model& model, const Tensor& m0, const Tensor& m1);
Tensor embed(Mmeda2Model& model, const Tensor& m0, const Tensor& m1);
Tensor embed(ConvAE& model, const Tensor& m0);
Tensor embed(AemfModel& model, const Tensor& m0_flat, const Tensor& m1);
Tensor embed(const CmfModel& model);
Tensor embed(MlpModel& model, const Tensor& features);

// ---------------------------------------------------------------------------
// Bundle round-trips (MMDL files, see serialize.hpp).

ModelBundle to_bundle(const CmfModel& model);
ModelBundle to_bundle(const AemfModel& model);
ModelBundle to_bundle(const ConvAE& model);
ModelBundle to_bundle(const Mmeda1Model& model);
ModelBundle to_bundle(const Mmeda2Model& model);
ModelBundle to_bundle(const MlpModel& model);

CmfModel cmf_from_bundle(const ModelBundle& bundle);
AemfModel aemf_from_bundle(const ModelBundle& bundle);
ConvAE conv_ae_from_bundle(const ModelBundle& bundle);
Mmeda1Model mmeda1_from_bundle(const ModelBundle& bundle);
Mmeda2Model mmeda2_from_bundle(const ModelBundle& bundle);
MlpModel mlp_from_bundle(const ModelBundle& bundle);

}  // namespace mmrl
