#include "mmrl/training.hpp"

#include <cmath>
#include <functional>
#include <iostream>
#include <ostream>

#include "mmrl/errors.hpp"
#include "mmrl/rng.hpp"

namespace mmrl {

BatchSchedule batch_schedule(std::size_t n, std::size_t b) {
    if (b < 1) throw ValueError("batch_schedule: batch size must be positive");
    if (b > n) {
        throw ValueError("batch_schedule: batch size " + std::to_string(b) + " exceeds row count " +
                         std::to_string(n));
    }
    BatchSchedule schedule;
    const std::size_t full = n / b;
    schedule.ranges.reserve(full);
    for (std::size_t i = 0; i < full; ++i) schedule.ranges.emplace_back(i * b, i * b + b);
    schedule.dropped = n - full * b;
    return schedule;
}

namespace {

// Accumulates per-step losses and reports step means.
struct EpochStats {
    double total = 0.0;
    std::vector<double> terms;
    std::size_t steps = 0;

    void record(const LossBreakdown& loss) {
        if (terms.empty()) terms.assign(loss.terms.size(), 0.0);
        total += loss.total.value().item();
        for (std::size_t i = 0; i < loss.terms.size(); ++i) terms[i] += loss.terms[i].second.value().item();
        steps += 1;
    }

    double mean_total() const { return total / static_cast<double>(steps); }

    void export_terms(std::vector<double>* out) const {
        if (!out) return;
        out->assign(terms.size(), 0.0);
        for (std::size_t i = 0; i < terms.size(); ++i) (*out)[i] = terms[i] / static_cast<double>(steps);
    }
};

using EpochFn = std::function<double(std::size_t epoch, std::vector<double>& term_means)>;

TrainHistory run_fit(const TrainConfig& cfg, std::vector<std::string> term_names, const EpochFn& epoch) {
    if (cfg.max_epochs < 1) throw ValueError("fit: max_epochs must be at least 1");
    if (!(cfg.tolerance > 0.0)) throw ValueError("fit: tolerance must be positive");
    TrainHistory history;
    history.term_names = std::move(term_names);
    double prev = 0.0;
    for (std::size_t e = 0; e < cfg.max_epochs; ++e) {
        std::vector<double> terms;
        const double loss = epoch(e, terms);
        if (!std::isfinite(loss)) {
            std::string bad = "total";
            for (std::size_t i = 0; i < terms.size() && i < history.term_names.size(); ++i) {
                if (!std::isfinite(terms[i])) {
                    bad = history.term_names[i];
                    break;
                }
            }
            throw DivergenceError(e + 1, bad,
                                  "training diverged at epoch " + std::to_string(e + 1) + ": term '" + bad +
                                      "' is non-finite");
        }
        history.epoch_loss.push_back(loss);
        history.epoch_terms.push_back(std::move(terms));
        history.epochs_run = e + 1;
        if (e > 0 && std::abs(loss - prev) < cfg.tolerance) {
            history.converged = true;
            break;
        }
        prev = loss;
    }
    return history;
}

void warn_dropped(const BatchSchedule& schedule, std::size_t n, std::size_t b) {
    if (schedule.dropped > 0) {
        std::cerr << "warning: dropping " << schedule.dropped << " of " << n
                  << " rows that do not fill a batch of " << b << "\n";
    }
}

// Row order for one epoch; identity unless shuffling is on.
std::vector<std::size_t> epoch_order(std::size_t n, const TrainConfig& cfg, std::size_t epoch) {
    std::vector<std::size_t> order;
    if (cfg.shuffle) {
        Rng rng(derive_seed(cfg.seed, 0x5158ull + epoch));
        order = rng.permutation(n);
    } else {
        order.resize(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
    }
    return order;
}

}  // namespace

double train_epoch_mmeda2(Mmeda2Model& model, const Tensor& m0, const Tensor& m1, const TrainConfig& cfg,
                          OptimizerState& opt, std::vector<double>* term_means) {
    const std::size_t n = m0.extent(0);
    if (m1.extent(0) != n) {
        throw ShapeError("train_epoch_mmeda2: M0 and M1 row counts differ, " + shape_string(m0.shape()) +
                         " vs " + shape_string(m1.shape()));
    }
    const BatchSchedule schedule = batch_schedule(n, cfg.batch_size);
    if (schedule.ranges.empty()) throw ValueError("train_epoch_mmeda2: empty batch schedule");
    const std::size_t n2 = m1.extent(1);

    EpochStats stats;
    for (const auto& [begin, end] : schedule.ranges) {
        const Tensor x0 = slice_rows(m0, begin, end);
        const Tensor x1 = slice_rows(m1, begin, end);
        const Tensor m2 = transposed(x1);  // n2 x b
        for (std::size_t j = 0; j < n2; j += cfg.batch_size) {
            const std::size_t j_end = std::min(j + cfg.batch_size, n2);
            const Tensor x2 = slice_rows(m2, j, j_end);
            const Tensor x1_block = slice_cols(x1, j, j_end);

            Tape tape;
            ParamBinder binder(tape);
            Mmeda2Outputs out = mmeda2_forward(tape, binder, model, tape.leaf(x0), tape.leaf(x1), tape.leaf(x2));
            LossBreakdown loss = mmeda2_loss(tape, out, x0, x1, x2, x1_block);
            tape.backward(loss.total);
            apply_step(binder, opt);
            stats.record(loss);
        }
    }
    stats.export_terms(term_means);
    return stats.mean_total();
}

double train_epoch_mmeda1(Mmeda1Model& model, const Tensor& m0, const Tensor& m1, const TrainConfig& cfg,
                          OptimizerState& opt, std::vector<double>* term_means) {
    const std::size_t n = m0.extent(0);
    if (m1.extent(0) != n) {
        throw ShapeError("train_epoch_mmeda1: M0 and M1 row counts differ, " + shape_string(m0.shape()) +
                         " vs " + shape_string(m1.shape()));
    }
    const BatchSchedule schedule = batch_schedule(n, cfg.batch_size);
    if (schedule.ranges.empty()) throw ValueError("train_epoch_mmeda1: empty batch schedule");

    EpochStats stats;
    for (const auto& [begin, end] : schedule.ranges) {
        const Tensor x0 = slice_rows(m0, begin, end);
        const Tensor x1 = slice_rows(m1, begin, end);
        Tape tape;
        ParamBinder binder(tape);
        Mmeda1Outputs out = mmeda1_forward(tape, binder, model, tape.leaf(x0), tape.leaf(x1));
        LossBreakdown loss = mmeda1_loss(tape, out, x0, x1);
        tape.backward(loss.total);
        apply_step(binder, opt);
        stats.record(loss);
    }
    stats.export_terms(term_means);
    return stats.mean_total();
}

namespace {

OptimizerState make_optimizer(const TrainConfig& cfg) {
    return cfg.optimizer == OptKind::sgd ? make_sgd(cfg.learning_rate) : make_adam(cfg.learning_rate);
}

Tensor maybe_permuted(const Tensor& t, const std::vector<std::size_t>& order, bool shuffle) {
    return shuffle ? take_rows(t, order) : t;
}

}  // namespace

TrainHistory fit(Mmeda2Model& model, const MultiModalDataset& dataset, const TrainConfig& cfg) {
    warn_dropped(batch_schedule(dataset.rows(), cfg.batch_size), dataset.rows(), cfg.batch_size);
    OptimizerState opt = make_optimizer(cfg);
    return run_fit(cfg, {"x0", "x1", "x2", "x1pp"}, [&](std::size_t epoch, std::vector<double>& terms) {
        const auto order = epoch_order(dataset.rows(), cfg, epoch);
        const Tensor m0 = maybe_permuted(dataset.m0, order, cfg.shuffle);
        const Tensor m1 = maybe_permuted(dataset.m1, order, cfg.shuffle);
        return train_epoch_mmeda2(model, m0, m1, cfg, opt, &terms);
    });
}

TrainHistory fit(Mmeda1Model& model, const MultiModalDataset& dataset, const TrainConfig& cfg) {
    warn_dropped(batch_schedule(dataset.rows(), cfg.batch_size), dataset.rows(), cfg.batch_size);
    OptimizerState opt = make_optimizer(cfg);
    return run_fit(cfg, {"x0", "x1"}, [&](std::size_t epoch, std::vector<double>& terms) {
        const auto order = epoch_order(dataset.rows(), cfg, epoch);
        const Tensor m0 = maybe_permuted(dataset.m0, order, cfg.shuffle);
        const Tensor m1 = maybe_permuted(dataset.m1, order, cfg.shuffle);
        return train_epoch_mmeda1(model, m0, m1, cfg, opt, &terms);
    });
}

TrainHistory fit(AemfModel& model, const MultiModalDataset& dataset, const TrainConfig& cfg) {
    const std::size_t n = dataset.rows();
    const std::size_t image_dim = dataset.m0.size() / n;
    if (image_dim != model.dim_a || dataset.m1.extent(1) != model.dim_b) {
        throw ShapeError("fit(aemf): dataset views (" + std::to_string(image_dim) + ", " +
                         std::to_string(dataset.m1.extent(1)) + ") do not match model dims (" +
                         std::to_string(model.dim_a) + ", " + std::to_string(model.dim_b) + ")");
    }
    warn_dropped(batch_schedule(n, cfg.batch_size), n, cfg.batch_size);
    const Tensor m0_flat = dataset.m0.reshaped({n, image_dim});
    OptimizerState opt = make_optimizer(cfg);
    return run_fit(cfg, {"prod_a", "prod_b", "row_ae", "col_ae_a", "col_ae_b"},
                   [&](std::size_t epoch, std::vector<double>& terms) {
                       const auto order = epoch_order(n, cfg, epoch);
                       const Tensor ma = maybe_permuted(m0_flat, order, cfg.shuffle);
                       const Tensor mb = maybe_permuted(dataset.m1, order, cfg.shuffle);
                       const BatchSchedule schedule = batch_schedule(n, cfg.batch_size);
                       EpochStats stats;
                       for (const auto& [begin, end] : schedule.ranges) {
                           const Tensor xa = slice_rows(ma, begin, end);
                           const Tensor xb = slice_rows(mb, begin, end);
                           const Tensor x_cat = concat_cols(xa, xb);
                           const Tensor xa_t = transposed(xa);
                           const Tensor xb_t = transposed(xb);
                           Tape tape;
                           ParamBinder binder(tape);
                           AemfOutputs out = aemf_forward(tape, binder, model, tape.leaf(x_cat),
                                                          tape.leaf(xa_t), tape.leaf(xb_t));
                           LossBreakdown loss = aemf_loss(tape, out, xa, xb, x_cat, xa_t, xb_t);
                           tape.backward(loss.total);
                           apply_step(binder, opt);
                           stats.record(loss);
                       }
                       stats.export_terms(&terms);
                       return stats.mean_total();
                   });
}

TrainHistory fit(ConvAE& model, const MultiModalDataset& dataset, const TrainConfig& cfg) {
    const std::size_t n = dataset.rows();
    warn_dropped(batch_schedule(n, cfg.batch_size), n, cfg.batch_size);
    OptimizerState opt = make_optimizer(cfg);
    return run_fit(cfg, {"recon"}, [&](std::size_t epoch, std::vector<double>& terms) {
        const auto order = epoch_order(n, cfg, epoch);
        const Tensor m0 = maybe_permuted(dataset.m0, order, cfg.shuffle);
        const BatchSchedule schedule = batch_schedule(n, cfg.batch_size);
        EpochStats stats;
        for (const auto& [begin, end] : schedule.ranges) {
            const Tensor x0 = slice_rows(m0, begin, end);
            Tape tape;
            ParamBinder binder(tape);
            AeOutputs out = conv_ae_forward(tape, binder, model, tape.leaf(x0));
            LossBreakdown loss;
            loss.total = tape.mse_loss(out.reconstruction, x0);
            loss.terms.emplace_back("recon", loss.total);
            tape.backward(loss.total);
            apply_step(binder, opt);
            stats.record(loss);
        }
        stats.export_terms(&terms);
        return stats.mean_total();
    });
}

TrainHistory fit(CmfModel& model, std::span<const Tensor> matrices, const TrainConfig& cfg) {
    if (matrices.size() != model.col_factors.size()) {
        throw ShapeError("fit(cmf): " + std::to_string(matrices.size()) + " matrices for " +
                         std::to_string(model.col_factors.size()) + " column factors");
    }
    std::vector<std::string> term_names;
    for (std::size_t m = 0; m < matrices.size(); ++m) term_names.push_back("m" + std::to_string(m));
    OptimizerState opt = make_optimizer(cfg);
    return run_fit(cfg, std::move(term_names), [&](std::size_t, std::vector<double>& terms) {
        Tape tape;
        ParamBinder binder(tape);
        LossBreakdown loss = cmf_loss(tape, binder, model, matrices);
        tape.backward(loss.total);
        apply_step(binder, opt);
        terms.clear();
        for (const auto& [_, term] : loss.terms) terms.push_back(term.value().item());
        return loss.total.value().item();
    });
}

TrainHistory fit(MlpModel& model, const MultiModalDataset& dataset, const TrainConfig& cfg) {
    const std::size_t n = dataset.rows();
    if (model.classification && !dataset.has_labels()) {
        throw ValueError("fit(mlp): classification training needs labels");
    }
    if (!model.classification && !dataset.has_targets()) {
        throw ValueError("fit(mlp): regression training needs targets");
    }
    warn_dropped(batch_schedule(n, cfg.batch_size), n, cfg.batch_size);
    const std::size_t image_dim = dataset.m0.size() / n;
    const Tensor features = concat_cols(dataset.m0.reshaped({n, image_dim}), dataset.m1);
    OptimizerState opt = make_optimizer(cfg);
    const char* term = model.classification ? "ce" : "mse";
    return run_fit(cfg, {term}, [&](std::size_t epoch, std::vector<double>& terms) {
        const auto order = epoch_order(n, cfg, epoch);
        const Tensor x_all = maybe_permuted(features, order, cfg.shuffle);
        const BatchSchedule schedule = batch_schedule(n, cfg.batch_size);
        EpochStats stats;
        for (const auto& [begin, end] : schedule.ranges) {
            Tape tape;
            ParamBinder binder(tape);
            Var logits = mlp_forward(tape, binder, model, tape.leaf(slice_rows(x_all, begin, end)));
            LossBreakdown loss;
            if (model.classification) {
                std::vector<int> y(end - begin);
                for (std::size_t i = begin; i < end; ++i) y[i - begin] = dataset.labels[order[i]];
                loss.total = tape.cross_entropy_loss(logits, y);
            } else {
                Tensor y({end - begin, 1});
                for (std::size_t i = begin; i < end; ++i) y(i - begin, 0) = dataset.targets[order[i]];
                loss.total = tape.mse_loss(logits, y);
            }
            loss.terms.emplace_back(model.classification ? "ce" : "mse", loss.total);
            tape.backward(loss.total);
            apply_step(binder, opt);
            stats.record(loss);
        }
        stats.export_terms(&terms);
        return stats.mean_total();
    });
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
    const auto old_precision = out.precision(17);
    out << "epoch,total";
    for (const std::string& name : history.term_names) out << ",term_" << name;
    out << '\n';
    for (std::size_t e = 0; e < history.epochs_run; ++e) {
        out << (e + 1) << ',' << history.epoch_loss[e];
        for (double term : history.epoch_terms[e]) out << ',' << term;
        out << '\n';
    }
    out.precision(old_precision);
}

}  // namespace mmrl
