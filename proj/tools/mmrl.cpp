// Command line front end: synth -> train -> embed -> eval pipelines.
//
// Exit codes: 0 success, 2 usage, 3 I/O, 4 divergence, 5 shape/architecture
// mismatch, 6 evaluation-input error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmrl/data.hpp"
#include "mmrl/downstream.hpp"
#include "mmrl/errors.hpp"
#include "mmrl/models.hpp"
#include "mmrl/serialize.hpp"
#include "mmrl/training.hpp"

namespace fs = std::filesystem;
using namespace mmrl;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitShape = 5;
constexpr int kExitEvalInput = 6;

struct EvalInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// "1x16x16" -> channels, height, width
void parse_image_dims(const std::string& text, std::size_t& c, std::size_t& h, std::size_t& w) {
    unsigned long long uc = 0, uh = 0, uw = 0;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%llux%llux%llu%c", &uc, &uh, &uw, &extra) != 3 || uc == 0 || uh == 0 ||
        uw == 0) {
        throw ValueError("--image must look like CxHxW (e.g. 1x16x16), got '" + text + "'");
    }
    c = uc;
    h = uh;
    w = uw;
}

struct SynthArgs {
    std::string out_dir;
    std::string image = "1x16x16";
    SynthSpec spec;
};

int run_synth(SynthArgs& args) {
    parse_image_dims(args.image, args.spec.channels, args.spec.height, args.spec.width);
    const MultiModalDataset dataset = generate_synthetic(args.spec);
    save_dataset(args.out_dir, dataset, &args.spec);
    double positive = 0.0;
    for (int y : dataset.labels) positive += y;
    std::cout << "wrote " << args.out_dir << ": n=" << args.spec.n << " image=" << args.spec.channels << "x"
              << args.spec.height << "x" << args.spec.width << " text-dim=" << args.spec.feature_dim
              << " rank=" << args.spec.latent_dim << " sigma=" << args.spec.noise_sigma
              << " seed=" << args.spec.seed << " positive-rate=" << positive / double(args.spec.n) << "\n";
    return 0;
}

struct TrainArgs {
    std::string data_dir;
    std::string model = "mmeda2";
    std::string task = "cls";
    std::string out = "model.mmdl";
    std::string history_path;
    std::size_t embed_dim = 50;
    TrainConfig cfg;
};

int run_train(TrainArgs& args) {
    const ModelKind kind = parse_model_kind(args.model);
    if (args.task != "cls" && args.task != "reg") {
        throw ValueError("--task must be cls or reg, got '" + args.task + "'");
    }
    const MultiModalDataset dataset = load_dataset(args.data_dir);
    const std::size_t n = dataset.rows();
    const std::size_t image_dim = dataset.m0.size() / n;
    const std::size_t c = dataset.m0.extent(1), h = dataset.m0.extent(2), w = dataset.m0.extent(3);
    const std::size_t n2 = dataset.m1.extent(1);

    Rng rng(args.cfg.seed);
    ModelBundle bundle;
    TrainHistory history;
    switch (kind) {
        case ModelKind::cmf: {
            CmfModel model = make_cmf(n, {image_dim, n2}, args.embed_dim, rng);
            const std::vector<Tensor> matrices{dataset.m0.reshaped({n, image_dim}), dataset.m1};
            history = fit(model, matrices, args.cfg);
            bundle = to_bundle(model);
            break;
        }
        case ModelKind::aemf: {
            AemfModel model = make_aemf(image_dim, n2, args.cfg.batch_size, args.embed_dim, rng);
            history = fit(model, dataset, args.cfg);
            bundle = to_bundle(model);
            break;
        }
        case ModelKind::convae: {
            ConvAE model = make_conv_ae(c, h, w, args.embed_dim, rng);
            history = fit(model, dataset, args.cfg);
            bundle = to_bundle(model);
            break;
        }
        case ModelKind::mmeda1: {
            Mmeda1Model model = make_mmeda1(c, h, w, n2, args.cfg.batch_size, args.embed_dim, rng);
            history = fit(model, dataset, args.cfg);
            bundle = to_bundle(model);
            break;
        }
        case ModelKind::mmeda2: {
            Mmeda2Model model = make_mmeda2(c, h, w, n2, args.cfg.batch_size, args.embed_dim, rng);
            history = fit(model, dataset, args.cfg);
            bundle = to_bundle(model);
            break;
        }
        case ModelKind::mlp: {
            MlpModel model = make_mlp(image_dim + n2, args.task == "cls", rng);
            history = fit(model, dataset, args.cfg);
            bundle = to_bundle(model);
            break;
        }
    }

    save_model(args.out, bundle);
    if (!args.history_path.empty()) {
        std::ofstream f(args.history_path, std::ios::trunc);
        if (!f) throw IoError("cannot write history file " + args.history_path);
        write_history_csv(f, history);
    }
    std::cout << "trained " << args.model << ": epochs=" << history.epochs_run
              << " converged=" << (history.converged ? "yes" : "no")
              << " final-loss=" << history.epoch_loss.back() << " -> " << args.out << "\n";
    return 0;
}

struct EmbedArgs {
    std::string data_dir;
    std::string model_file;
    std::string out = "reps.mmtf";
};

int run_embed(EmbedArgs& args) {
    const ModelBundle bundle = load_model(args.model_file);
    const ModelKind kind = parse_model_kind(bundle_kind(bundle));
    const MultiModalDataset dataset = load_dataset(args.data_dir);
    const std::size_t n = dataset.rows();
    const std::size_t image_dim = dataset.m0.size() / n;

    Tensor reps;
    switch (kind) {
        case ModelKind::cmf: {
            const CmfModel model = cmf_from_bundle(bundle);
            if (model.row_factor.extent(0) != n) {
                throw ShapeError("cmf factors cover " + std::to_string(model.row_factor.extent(0)) +
                                 " entities but the dataset has " + std::to_string(n));
            }
            reps = embed(model);
            break;
        }
        case ModelKind::aemf: {
            AemfModel model = aemf_from_bundle(bundle);
            reps = embed(model, dataset.m0.reshaped({n, image_dim}), dataset.m1);
            break;
        }
        case ModelKind::convae: {
            ConvAE model = conv_ae_from_bundle(bundle);
            reps = embed(model, dataset.m0);
            break;
        }
        case ModelKind::mmeda1: {
            Mmeda1Model model = mmeda1_from_bundle(bundle);
            reps = embed(model, dataset.m0, dataset.m1);
            break;
        }
        case ModelKind::mmeda2: {
            Mmeda2Model model = mmeda2_from_bundle(bundle);
            reps = embed(model, dataset.m0, dataset.m1);
            break;
        }
        case ModelKind::mlp: {
            MlpModel model = mlp_from_bundle(bundle);
            reps = embed(model, concat_cols(dataset.m0.reshaped({n, image_dim}), dataset.m1));
            break;
        }
    }
    write_tensor(args.out, reps);
    std::cout << "wrote " << args.out << ": " << shape_string(reps.shape()) << " representations\n";
    return 0;
}

struct EvalArgs {
    std::string data_dir;
    std::vector<std::string> reps_paths;
    double split_ratio = 0.8;
    std::uint64_t split_seed = 0;
    ForestConfig forest;
    bool json = false;
};

int run_eval(EvalArgs& args) {
    const MultiModalDataset dataset = load_dataset(args.data_dir);
    if (!dataset.has_labels()) throw EvalInputError("dataset has no labels for the classification task");
    if (!dataset.has_targets()) throw EvalInputError("dataset has no targets for the regression task");
    const std::size_t n = dataset.rows();
    const Split split = make_split(n, args.split_ratio, args.split_seed);

    std::vector<std::pair<std::string, MetricsReport>> rows;
    for (const std::string& path : args.reps_paths) {
        const Tensor reps = read_tensor(path);
        if (reps.ndim() != 2 || reps.extent(0) != n) {
            throw EvalInputError("representations " + path + " are " + shape_string(reps.shape()) +
                                 " but the dataset has " + std::to_string(n) + " rows");
        }
        for (std::size_t i = 0; i < reps.extent(0); ++i) {
            for (std::size_t j = 0; j < reps.extent(1); ++j) {
                if (!std::isfinite(reps(i, j))) {
                    throw EvalInputError("non-finite representation value in " + path + " at row " +
                                         std::to_string(i));
                }
            }
        }
        const MetricsReport report = evaluate(reps, dataset.labels, dataset.targets, split, args.forest);
        rows.emplace_back(fs::path(path).stem().string(), report);
    }

    if (args.json) {
        for (const auto& [name, report] : rows) {
            std::cout << "{\"model\": \"" << name << "\", " << metrics_json_line(report).substr(1) << "\n";
        }
    } else {
        std::cout << metrics_table(rows);
    }
    return 0;
}

// Fill config values from an optional JSON file; explicitly passed flags win.
void apply_config_file(const std::string& path, const CLI::App* cmd, TrainArgs& args) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ValueError("config file " + path + " is not valid JSON");

    const auto overridden = [&](const std::string& flag) {
        const CLI::Option* opt = cmd->get_option(flag);
        return opt && opt->count() > 0;
    };
    if (j.contains("model") && !overridden("--model")) args.model = j["model"].get<std::string>();
    if (j.contains("task") && !overridden("--task")) args.task = j["task"].get<std::string>();
    if (j.contains("embed_dim") && !overridden("--embed-dim")) args.embed_dim = j["embed_dim"].get<std::size_t>();
    if (j.contains("batch") && !overridden("--batch")) args.cfg.batch_size = j["batch"].get<std::size_t>();
    if (j.contains("lr") && !overridden("--lr")) args.cfg.learning_rate = j["lr"].get<double>();
    if (j.contains("tol") && !overridden("--tol")) args.cfg.tolerance = j["tol"].get<double>();
    if (j.contains("max_epochs") && !overridden("--max-epochs")) args.cfg.max_epochs = j["max_epochs"].get<std::size_t>();
    if (j.contains("seed") && !overridden("--seed")) args.cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("optimizer") && !overridden("--optimizer"))
        args.cfg.optimizer = parse_opt_kind(j["optimizer"].get<std::string>());
    if (j.contains("shuffle") && !overridden("--shuffle")) args.cfg.shuffle = j["shuffle"].get<bool>();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-modal representation learning pipeline (synth, train, embed, eval)"};
    app.require_subcommand(1);

    SynthArgs synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic multi-modal dataset");
    synth_cmd->add_option("--out", synth.out_dir, "Output dataset directory")->required();
    synth_cmd->add_option("--n", synth.spec.n, "Number of entities")->capture_default_str();
    synth_cmd->add_option("--image", synth.image, "Image view dims CxHxW")->capture_default_str();
    synth_cmd->add_option("--text-dim", synth.spec.feature_dim, "Feature view width")->capture_default_str();
    synth_cmd->add_option("--rank", synth.spec.latent_dim, "Latent rank")->capture_default_str();
    synth_cmd->add_option("--sigma", synth.spec.noise_sigma, "Noise sigma")->capture_default_str();
    synth_cmd->add_option("--seed", synth.spec.seed, "Generator seed")->capture_default_str();

    TrainArgs train;
    std::string config_path;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a model on a dataset directory");
    train_cmd->add_option("--data", train.data_dir, "Dataset directory")->required();
    train_cmd->add_option("--model", train.model, "cmf | aemf | convae | mmeda1 | mmeda2 | mlp")
        ->capture_default_str();
    train_cmd->add_option("--task", train.task, "mlp head: cls or reg")->capture_default_str();
    train_cmd->add_option("--embed-dim", train.embed_dim, "Embedding width d")->capture_default_str();
    train_cmd->add_option("--batch", train.cfg.batch_size, "Batch size b")->capture_default_str();
    CLI::Option* lr_opt = train_cmd->add_option("--lr", train.cfg.learning_rate, "Learning rate")
                              ->capture_default_str();
    CLI::Option* opt_opt =
        train_cmd
            ->add_option_function<std::string>(
                "--optimizer", [&](const std::string& s) { train.cfg.optimizer = parse_opt_kind(s); },
                "sgd or adam (default adam; mlp reg defaults to sgd)")
            ->default_str("adam");
    train_cmd->add_option("--tol", train.cfg.tolerance, "Convergence tolerance on epoch loss")
        ->capture_default_str();
    train_cmd->add_option("--max-epochs", train.cfg.max_epochs, "Epoch cap")->capture_default_str();
    train_cmd->add_option("--seed", train.cfg.seed, "Init and shuffle seed")->capture_default_str();
    train_cmd->add_flag("--shuffle", train.cfg.shuffle, "Seeded row shuffle between epochs");
    train_cmd->add_option("--out", train.out, "Model bundle output path")->capture_default_str();
    train_cmd->add_option("--history", train.history_path, "Loss history CSV path");
    train_cmd->add_option("--config", config_path, "JSON config file; flags override its values");

    EmbedArgs embed_args;
    CLI::App* embed_cmd = app.add_subcommand("embed", "Write representations for a dataset");
    embed_cmd->add_option("--data", embed_args.data_dir, "Dataset directory")->required();
    embed_cmd->add_option("--model-file", embed_args.model_file, "Trained model bundle")->required();
    embed_cmd->add_option("--out", embed_args.out, "Output MMTF file")->capture_default_str();

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Downstream evaluation of representation files");
    eval_cmd->add_option("--data", eval_args.data_dir, "Dataset directory (labels + targets)")->required();
    eval_cmd->add_option("--reps", eval_args.reps_paths, "Representation MMTF files (repeatable)")
        ->required();
    eval_cmd->add_option("--split-ratio", eval_args.split_ratio, "Train fraction")->capture_default_str();
    eval_cmd->add_option("--split-seed", eval_args.split_seed, "Split permutation seed")
        ->capture_default_str();
    eval_cmd->add_option("--forest-depth", eval_args.forest.max_depth, "Random forest max depth")
        ->capture_default_str();
    eval_cmd->add_option("--trees", eval_args.forest.n_trees, "Random forest size")->capture_default_str();
    eval_cmd->add_option("--forest-seed", eval_args.forest.seed, "Random forest seed")
        ->capture_default_str();
    eval_cmd->add_flag("--json", eval_args.json, "Emit one JSON line per representation file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (synth_cmd->parsed()) return run_synth(synth);
        if (train_cmd->parsed()) {
            if (!config_path.empty()) apply_config_file(config_path, train_cmd, train);
            // The supervised baseline ships different stock defaults per task.
            if (train.model == "mlp" && lr_opt->count() == 0) {
                train.cfg.learning_rate = train.task == "cls" ? 5e-4 : 1e-4;
            }
            if (train.model == "mlp" && train.task == "reg" && opt_opt->count() == 0) {
                train.cfg.optimizer = OptKind::sgd;
            }
            return run_train(train);
        }
        if (embed_cmd->parsed()) return run_embed(embed_args);
        if (eval_cmd->parsed()) return run_eval(eval_args);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const EvalInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEvalInput;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return eval_cmd->parsed() ? kExitEvalInput : kExitShape;
    } catch (const ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return 0;
}
