#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "mmrl/data.hpp"
#include "mmrl/models.hpp"
#include "mmrl/nn.hpp"

namespace mmrl {

struct TrainConfig {
    std::size_t batch_size = 50;
    double learning_rate = 1e-4;
    OptKind optimizer = OptKind::adam;
    double tolerance = 1e-4;  // absolute difference of successive epoch losses
    std::size_t max_epochs = 300;
    std::uint64_t seed = 0;
    bool shuffle = false;  // seeded row shuffle between epochs; off by default
};

struct TrainHistory {
    std::vector<std::string> term_names;
    std::vector<double> epoch_loss;                 // mean total loss per epoch
    std::vector<std::vector<double>> epoch_terms;   // mean per-term losses per epoch
    std::size_t epochs_run = 0;
    bool converged = false;
};

struct BatchSchedule {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;  // [begin, end)
    std::size_t dropped = 0;  // trailing rows that do not fill a batch
};

// Contiguous [i*b, i*b + b) ranges; a final partial range is dropped because
// the transposed-view autoencoders are built for width exactly b.
BatchSchedule batch_schedule(std::size_t n, std::size_t b);

// One pass over the data; returns the step-mean total loss and accumulates
// step-mean per-term losses into `term_means` (sized to the term count).
double train_epoch_mmeda2(Mmeda2Model& model, const Tensor& m0, const Tensor& m1, const TrainConfig& cfg,
                          OptimizerState& opt, std::vector<double>* term_means = nullptr);
double train_epoch_mmeda1(Mmeda1Model& model, const Tensor& m0, const Tensor& m1, const TrainConfig& cfg,
                          OptimizerState& opt, std::vector<double>* term_means = nullptr);

TrainHistory fit(Mmeda2Model& model, const MultiModalDataset& dataset, const TrainConfig& cfg);
TrainHistory fit(Mmeda1Model& model, const MultiModalDataset& dataset, const TrainConfig& cfg);
TrainHistory fit(AemfModel& model, const MultiModalDataset& dataset, const TrainConfig& cfg);
TrainHistory fit(ConvAE& model, const MultiModalDataset& dataset, const TrainConfig& cfg);
// CMF optimizes the factor entries directly, full batch (one step per epoch).
TrainHistory fit(CmfModel& model, std::span<const Tensor> matrices, const TrainConfig& cfg);
TrainHistory fit(MlpModel& model, const MultiModalDataset& dataset, const TrainConfig& cfg);

// CSV stream: header `epoch,total,term_<name>,...`, one row per epoch.
void write_history_csv(std::ostream& out, const TrainHistory& history);

}  // namespace mmrl
