#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mmrl/data.hpp"
#include "mmrl/serialize.hpp"
#include "mmrl/tensor.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = MMRL_CLI_PATH;

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "mmrl_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args, const fs::path& capture = {}) {
    std::string cmd = kCli + " " + args;
    if (capture.empty()) {
        cmd += " >/dev/null 2>&1";
    } else {
        cmd += " >" + capture.string() + " 2>&1";
    }
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<char> bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// One tiny dataset shared by the pipeline tests.
fs::path dataset_dir() {
    static const fs::path dir = [] {
        const fs::path d = work_dir() / "data";
        const int code = run("synth --out " + d.string() +
                             " --n 8 --image 1x4x4 --text-dim 5 --rank 2 --sigma 0.05 --seed 42");
        REQUIRE(code == 0);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("synth writes a dataset directory deterministically") {
    const fs::path d = dataset_dir();
    CHECK(fs::exists(d / "manifest.json"));
    CHECK(fs::exists(d / "m0.mmtf"));
    CHECK(fs::exists(d / "m1.mmtf"));
    CHECK(fs::exists(d / "labels.mmtf"));
    CHECK(fs::exists(d / "targets.mmtf"));

    const fs::path d2 = work_dir() / "data_again";
    CHECK(run("synth --out " + d2.string() +
              " --n 8 --image 1x4x4 --text-dim 5 --rank 2 --sigma 0.05 --seed 42") == 0);
    CHECK(bytes(d / "m0.mmtf") == bytes(d2 / "m0.mmtf"));
    CHECK(bytes(d / "targets.mmtf") == bytes(d2 / "targets.mmtf"));
}

TEST_CASE("synth validates flags and reports I/O failures") {
    CHECK(run("synth --out " + (work_dir() / "bad").string() + " --n 8 --image 1x4x4 --text-dim 32 --rank 64") ==
          2);
    CHECK(run("synth --out /proc/nonexistent/dir --n 8 --image 1x4x4 --text-dim 5 --rank 2") == 3);
    CHECK(run("synth") == 2);  // missing required --out
}

TEST_CASE("train writes a bundle and a history csv") {
    const fs::path d = dataset_dir();
    const fs::path model = work_dir() / "m2.mmdl";
    const fs::path hist = work_dir() / "m2.csv";
    const int code = run("train --data " + d.string() + " --model mmeda2 --embed-dim 3 --batch 4" +
                         " --lr 1e-3 --tol 1e-9 --max-epochs 3 --seed 0 --out " + model.string() +
                         " --history " + hist.string());
    CHECK(code == 0);
    CHECK(fs::exists(model));
    const std::string csv = slurp(hist);
    CHECK(csv.rfind("epoch,total,term_x0,term_x1,term_x2,term_x1pp\n", 0) == 0);

    // mmeda1 history carries two term columns
    const fs::path hist1 = work_dir() / "m1.csv";
    CHECK(run("train --data " + d.string() + " --model mmeda1 --embed-dim 3 --batch 4 --lr 1e-3" +
              " --tol 1e-9 --max-epochs 2 --out " + (work_dir() / "m1.mmdl").string() + " --history " +
              hist1.string()) == 0);
    CHECK(slurp(hist1).rfind("epoch,total,term_x0,term_x1\n", 0) == 0);
}

TEST_CASE("train rejects batches larger than the dataset") {
    const fs::path d = dataset_dir();
    const fs::path out = work_dir() / "capture.txt";
    const int code = run("train --data " + d.string() + " --model mmeda2 --batch 50 --max-epochs 1 --out " +
                             (work_dir() / "x.mmdl").string(),
                         out);
    CHECK(code == 2);
    CHECK(slurp(out).find("batch size 50 exceeds row count 8") != std::string::npos);
}

TEST_CASE("train reports divergence with exit 4") {
    const fs::path d = dataset_dir();
    const int code = run("train --data " + d.string() +
                         " --model cmf --embed-dim 2 --optimizer sgd --lr 1e9 --max-epochs 20 --out " +
                         (work_dir() / "diverged.mmdl").string());
    CHECK(code == 4);
}

TEST_CASE("embed is deterministic and validates architecture against data") {
    const fs::path d = dataset_dir();
    const fs::path model = work_dir() / "m2.mmdl";
    REQUIRE(fs::exists(model));

    const fs::path r1 = work_dir() / "r1.mmtf";
    const fs::path r2 = work_dir() / "r2.mmtf";
    CHECK(run("embed --data " + d.string() + " --model-file " + model.string() + " --out " + r1.string()) ==
          0);
    CHECK(run("embed --data " + d.string() + " --model-file " + model.string() + " --out " + r2.string()) ==
          0);
    CHECK(bytes(r1) == bytes(r2));
    const mmrl::Tensor reps = mmrl::read_tensor(r1);
    CHECK(reps.shape() == std::vector<std::size_t>{8, 3});

    // dataset with a different feature width: exit 5, message names widths
    const fs::path other = work_dir() / "other_data";
    REQUIRE(run("synth --out " + other.string() + " --n 8 --image 1x4x4 --text-dim 7 --rank 2 --seed 1") ==
            0);
    const fs::path capture = work_dir() / "embed_err.txt";
    const int code = run(
        "embed --data " + other.string() + " --model-file " + model.string() + " --out " + r1.string(),
        capture);
    CHECK(code == 5);
    CHECK(slurp(capture).find("5") != std::string::npos);
    CHECK(slurp(capture).find("7") != std::string::npos);
}

TEST_CASE("eval renders the fixed column order and flags bad input") {
    const fs::path d = dataset_dir();
    const fs::path reps = work_dir() / "r1.mmtf";
    REQUIRE(fs::exists(reps));

    const fs::path table = work_dir() / "table.txt";
    CHECK(run("eval --data " + d.string() + " --reps " + reps.string() + " --split-ratio 0.75 --split-seed 0",
              table) == 0);
    const std::string text = slurp(table);
    CHECK(text.find("F1") != std::string::npos);
    CHECK(text.find("Accuracy") != std::string::npos);
    CHECK(text.find("Precision") != std::string::npos);
    CHECK(text.find("Recall") != std::string::npos);
    CHECK(text.find("MSE") != std::string::npos);
    CHECK(text.find("r1") != std::string::npos);

    // two reps files produce two comparison rows
    const fs::path table2 = work_dir() / "table2.txt";
    CHECK(run("eval --data " + d.string() + " --reps " + reps.string() + " --reps " +
                  (work_dir() / "r2.mmtf").string() + " --split-ratio 0.75",
              table2) == 0);
    CHECK(slurp(table2).find("r2") != std::string::npos);

    // JSON mode emits one object per reps file
    const fs::path json_out = work_dir() / "eval.json";
    CHECK(run("eval --data " + d.string() + " --reps " + reps.string() + " --split-ratio 0.75 --json",
              json_out) == 0);
    CHECK(slurp(json_out).find("\"model\": \"r1\"") != std::string::npos);
    CHECK(slurp(json_out).find("\"f1\"") != std::string::npos);

    // a NaN in the reps file is an evaluation-input error naming the row
    mmrl::Tensor bad({8, 2});
    bad(3, 1) = std::numeric_limits<double>::quiet_NaN();
    const fs::path bad_path = work_dir() / "bad.mmtf";
    mmrl::write_tensor(bad_path, bad);
    const fs::path err = work_dir() / "eval_err.txt";
    CHECK(run("eval --data " + d.string() + " --reps " + bad_path.string(), err) == 6);
    CHECK(slurp(err).find("row 3") != std::string::npos);

    // a dataset without labels cannot serve the classification task
    mmrl::MultiModalDataset unlabeled = mmrl::load_dataset(d);
    unlabeled.labels.clear();
    const fs::path bare = work_dir() / "unlabeled_data";
    mmrl::save_dataset(bare, unlabeled);
    CHECK(run("eval --data " + bare.string() + " --reps " + reps.string()) == 6);
}

TEST_CASE("help lists flags with their defaults") {
    const fs::path out = work_dir() / "help.txt";
    CHECK(run("train --help", out) == 0);
    const std::string text = slurp(out);
    CHECK(text.find("--batch") != std::string::npos);
    CHECK(text.find("50") != std::string::npos);      // batch default
    CHECK(text.find("0.0001") != std::string::npos);  // lr and tolerance default
    CHECK(text.find("--embed-dim") != std::string::npos);
}

TEST_CASE("config files supply train options but explicit flags win") {
    const fs::path d = dataset_dir();
    const fs::path cfg = work_dir() / "run.json";
    {
        std::ofstream out(cfg);
        out << R"({"model": "mmeda1", "embed_dim": 2, "batch": 4, "max_epochs": 9, "lr": 1e-3})";
    }
    const fs::path hist = work_dir() / "cfg.csv";
    // --max-epochs on the command line overrides the file's 9
    CHECK(run("train --data " + d.string() + " --config " + cfg.string() + " --max-epochs 2 --tol 1e-9" +
              " --out " + (work_dir() / "cfg.mmdl").string() + " --history " + hist.string()) == 0);
    const std::string csv = slurp(hist);
    CHECK(csv.rfind("epoch,total,term_x0,term_x1\n", 0) == 0);  // mmeda1 came from the file
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 3);  // header + 2 epochs, not 9
}

TEST_CASE("mlp baseline trains through the cli") {
    const fs::path d = dataset_dir();
    CHECK(run("train --data " + d.string() + " --model mlp --task reg --batch 4 --max-epochs 2 --out " +
              (work_dir() / "mlp.mmdl").string()) == 0);
    CHECK(run("embed --data " + d.string() + " --model-file " + (work_dir() / "mlp.mmdl").string() +
              " --out " + (work_dir() / "mlp_reps.mmtf").string()) == 0);
    const mmrl::Tensor reps = mmrl::read_tensor(work_dir() / "mlp_reps.mmtf");
    CHECK(reps.shape() == std::vector<std::size_t>{8, 64});
}
