#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "slime/data.hpp"
#include "slime/eval.hpp"
#include "slime/filter_mixer.hpp"
#include "slime/model.hpp"

namespace fs = std::filesystem;
using namespace slime;

namespace {

std::string cli_path() {
    const char* env = std::getenv("SLIME_CLI");
    REQUIRE(env != nullptr);
    return env;
}

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) out.append(buf, n);
    int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct WorkDir {
    fs::path path;
    WorkDir() {
        path = fs::temp_directory_path() /
               ("slime_cli_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~WorkDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

// 12 users x 5 interactions over 6 items; hand-countable statistics
void write_fixture_log(const std::string& path) {
    std::ofstream out(path);
    for (int u = 0; u < 12; ++u)
        for (int k = 0; k < 5; ++k)
            out << "user" << u << "\titem" << ((u + k) % 6) << "\t" << (1000 + u * 10 + k)
                << "\n";
}

}  // namespace

TEST_CASE("prepare prints hand-counted statistics for the fixture log") {
    WorkDir wd;
    write_fixture_log(wd.file("raw.tsv"));
    auto res = run_cli("prepare --raw " + wd.file("raw.tsv") + " --format tsv --cache " +
                       wd.file("ds.bin"));
    INFO(res.out);
    REQUIRE(res.exit_code == 0);
    // 12 users * 5 actions, 6 items, avg length 5, sparsity 1 - 60/72
    CHECK(res.out.find("users=12") != std::string::npos);
    CHECK(res.out.find("items=6") != std::string::npos);
    CHECK(res.out.find("actions=60") != std::string::npos);
    CHECK(res.out.find("avg_length=5") != std::string::npos);
    CHECK(res.out.find("sparsity=0.1666") != std::string::npos);
    CHECK(fs::exists(wd.file("ds.bin")));
}

TEST_CASE("prepare hits the cache on a rerun and honors --min-timestamp") {
    WorkDir wd;
    write_fixture_log(wd.file("raw.tsv"));
    const std::string base =
        "prepare --raw " + wd.file("raw.tsv") + " --format tsv --cache " + wd.file("ds.bin");
    REQUIRE(run_cli(base).exit_code == 0);
    auto rerun = run_cli(base);
    REQUIRE(rerun.exit_code == 0);
    CHECK(rerun.out.find("cache hit") != std::string::npos);

    // cutting at timestamp 1060 keeps users 6..11 only (30 actions)
    auto cut = run_cli("prepare --raw " + wd.file("raw.tsv") +
                       " --format tsv --min-timestamp 1060 --cache " + wd.file("ds_cut.bin"));
    INFO(cut.out);
    REQUIRE(cut.exit_code == 0);
    CHECK(cut.out.find("users=6") != std::string::npos);
    CHECK(cut.out.find("actions=30") != std::string::npos);
}

TEST_CASE("prepare aborts on malformed lines unless --skip-bad") {
    WorkDir wd;
    {
        std::ofstream out(wd.file("bad.tsv"));
        write_fixture_log(wd.file("bad.tsv"));
        std::ofstream app(wd.file("bad.tsv"), std::ios::app);
        app << "userX\titemY\tnot_a_number\n";
    }
    auto strict = run_cli("prepare --raw " + wd.file("bad.tsv") + " --cache " + wd.file("a.bin"));
    CHECK(strict.exit_code != 0);
    CHECK(strict.out.find("malformed") != std::string::npos);
    auto lax = run_cli("prepare --raw " + wd.file("bad.tsv") + " --skip-bad --cache " +
                       wd.file("b.bin"));
    INFO(lax.out);
    CHECK(lax.exit_code == 0);
    CHECK(lax.out.find("skipped line 61") != std::string::npos);
}

TEST_CASE("commands exit nonzero on missing inputs") {
    WorkDir wd;
    CHECK(run_cli("prepare --raw " + wd.file("nope.tsv")).exit_code != 0);
    CHECK(run_cli("train --cache " + wd.file("nope.bin")).exit_code != 0);
    CHECK(run_cli("eval --cache x --checkpoint " + wd.file("nope.ckpt")).exit_code != 0);
    CHECK(run_cli("visualize --checkpoint " + wd.file("nope.ckpt")).exit_code != 0);
    CHECK(run_cli("bogus_subcommand").exit_code != 0);
}

TEST_CASE("training is deterministic and the contrastive weight changes the log") {
    WorkDir wd;
    auto prep = run_cli(
        "prepare --synth --synth-users 25 --synth-items 16 --synth-periods 2 --synth-noise 0.1 "
        "--synth-horizon 30 --seed 5 --cache " +
        wd.file("ds.bin"));
    INFO(prep.out);
    REQUIRE(prep.exit_code == 0);

    const std::string train_args =
        "train --cache " + wd.file("ds.bin") +
        " --max-len 8 --hidden 8 --layers 2 --epochs 2 --batch-size 32 --seed 11";
    auto r1 = run_cli(train_args + " --checkpoint " + wd.file("m1.ckpt") + " --log " +
                      wd.file("l1.jsonl"));
    INFO(r1.out);
    REQUIRE(r1.exit_code == 0);
    auto r2 = run_cli(train_args + " --checkpoint " + wd.file("m2.ckpt") + " --log " +
                      wd.file("l2.jsonl"));
    REQUIRE(r2.exit_code == 0);
    // same seed -> bit-identical checkpoints and logs
    CHECK(read_file(wd.file("m1.ckpt")) == read_file(wd.file("m2.ckpt")));
    CHECK(read_file(wd.file("l1.jsonl")) == read_file(wd.file("l2.jsonl")));

    auto r3 = run_cli(train_args + " --lambda 0 --checkpoint " + wd.file("m3.ckpt") + " --log " +
                      wd.file("l3.jsonl"));
    REQUIRE(r3.exit_code == 0);
    CHECK(read_file(wd.file("l3.jsonl")) != read_file(wd.file("l1.jsonl")));
    CHECK(read_file(wd.file("l3.jsonl")).find("\"clreg_loss\": 0") != std::string::npos);

    // JSONL schema
    std::string line = read_file(wd.file("l1.jsonl"));
    for (const char* field : {"\"step\"", "\"rec_loss\"", "\"clreg_loss\"", "\"total\"",
                              "\"lr\"", "\"seed\""})
        CHECK(line.find(field) != std::string::npos);
}

TEST_CASE("eval matches the library invoked directly and splits differ") {
    WorkDir wd;
    REQUIRE(run_cli("prepare --synth --synth-users 25 --synth-items 16 --synth-periods 2 "
                    "--synth-noise 0.1 --synth-horizon 30 --seed 5 --cache " +
                    wd.file("ds.bin"))
                .exit_code == 0);
    REQUIRE(run_cli("train --cache " + wd.file("ds.bin") +
                    " --max-len 8 --hidden 8 --layers 2 --epochs 2 --batch-size 32 --seed 11 "
                    "--checkpoint " +
                    wd.file("m.ckpt"))
                .exit_code == 0);

    auto test_res = run_cli("eval --cache " + wd.file("ds.bin") + " --checkpoint " +
                            wd.file("m.ckpt") + " --split test --report " + wd.file("t.json"));
    INFO(test_res.out);
    REQUIRE(test_res.exit_code == 0);
    auto valid_res = run_cli("eval --cache " + wd.file("ds.bin") + " --checkpoint " +
                             wd.file("m.ckpt") + " --split valid --report " + wd.file("v.json"));
    REQUIRE(valid_res.exit_code == 0);
    CHECK(read_file(wd.file("t.json")) != read_file(wd.file("v.json")));

    // replicate the test-split evaluation through the library
    SequenceDataset ds;
    std::uint64_t stored_hash = 0;
    REQUIRE(read_dataset_cache(wd.file("ds.bin"), ds, stored_hash));
    auto ck = load_checkpoint(wd.file("m.ckpt"));
    ModelConfig cfg;
    cfg.max_len = 8;
    cfg.hidden = 8;
    cfg.layers = 2;
    cfg.seed = 11;
    cfg.vocab_size = ds.num_items();
    std::mt19937_64 rng(cfg.seed);
    auto params = ModelParams::init(cfg, rng);
    restore_params(params, ck);
    auto sched = build_ramp_schedule(cfg.num_bins(), cfg.layers, cfg.alpha, cfg.slide_mode);
    auto splits = split_leave_one_out(ds);
    auto report = evaluate(params, cfg, sched, splits.test, {5, 10});
    std::ostringstream expect;
    expect << "\"hr@5\": " << report.hr[0];
    CHECK(test_res.out.find(expect.str()) != std::string::npos);

    // identical reruns produce identical reports (pure function of inputs)
    auto again = run_cli("eval --cache " + wd.file("ds.bin") + " --checkpoint " +
                         wd.file("m.ckpt") + " --split test");
    CHECK(again.out == test_res.out);
}

TEST_CASE("config file drives training and flags override it") {
    WorkDir wd;
    REQUIRE(run_cli("prepare --synth --synth-users 25 --synth-items 16 --synth-periods 2 "
                    "--synth-noise 0.1 --synth-horizon 30 --seed 5 --cache " +
                    wd.file("ds.bin"))
                .exit_code == 0);
    {
        std::ofstream out(wd.file("run.cfg"));
        out << "version=1\nmax_len=8\nhidden=8\nlayers=2\nepochs=2\nbatch_size=32\nseed=11\n";
    }
    auto from_file = run_cli("train --config " + wd.file("run.cfg") + " --cache " +
                             wd.file("ds.bin") + " --checkpoint " + wd.file("mf.ckpt"));
    INFO(from_file.out);
    REQUIRE(from_file.exit_code == 0);
    auto from_flags = run_cli("train --cache " + wd.file("ds.bin") +
                              " --max-len 8 --hidden 8 --layers 2 --epochs 2 --batch-size 32 "
                              "--seed 11 --checkpoint " +
                              wd.file("mg.ckpt"));
    REQUIRE(from_flags.exit_code == 0);
    CHECK(read_file(wd.file("mf.ckpt")) == read_file(wd.file("mg.ckpt")));

    // a flag overrides the file value (different seed -> different checkpoint)
    auto overridden = run_cli("train --config " + wd.file("run.cfg") + " --seed 99 --cache " +
                              wd.file("ds.bin") + " --checkpoint " + wd.file("mo.ckpt"));
    REQUIRE(overridden.exit_code == 0);
    CHECK(read_file(wd.file("mo.ckpt")) != read_file(wd.file("mf.ckpt")));

    // version field is mandatory
    {
        std::ofstream out(wd.file("bad.cfg"));
        out << "max_len=8\n";
    }
    CHECK(run_cli("train --config " + wd.file("bad.cfg") + " --cache " + wd.file("ds.bin"))
              .exit_code != 0);
}

TEST_CASE("sweep produces one row per grid cell and resumes after interruption") {
    WorkDir wd;
    REQUIRE(run_cli("prepare --synth --synth-users 25 --synth-items 16 --synth-periods 2 "
                    "--synth-noise 0.1 --synth-horizon 30 --seed 5 --cache " +
                    wd.file("ds.bin"))
                .exit_code == 0);
    const std::string base = "sweep --cache " + wd.file("ds.bin") +
                             " --max-len 8 --hidden 8 --layers 2 --epochs 1 --batch-size 32 "
                             "--seed 11 --alphas 0.3,0.6 --modes 1,4 --epsilons 0,0.05 "
                             "--out-dir " +
                             wd.file("grid");
    auto res = run_cli(base);
    INFO(res.out);
    REQUIRE(res.exit_code == 0);
    auto agg = read_file(wd.file("grid") + "/sweep.csv");
    CHECK(std::count(agg.begin(), agg.end(), '\n') == 9);  // header + 2*2*2 rows

    // drop one cell and the aggregate; the rerun recomputes only that cell
    fs::remove(wd.file("grid") + "/cell_a0.3_m1_e0.csv");
    fs::remove(wd.file("grid") + "/sweep.csv");
    auto resumed = run_cli(base);
    REQUIRE(resumed.exit_code == 0);
    CHECK(std::count(resumed.out.begin(), resumed.out.end(), '\n') >= 8);
    CHECK(resumed.out.find("skip completed cell") != std::string::npos);
    auto agg2 = read_file(wd.file("grid") + "/sweep.csv");
    CHECK(std::count(agg2.begin(), agg2.end(), '\n') == 9);
}

TEST_CASE("visualize emits the amplitude schema with zeros outside windows") {
    WorkDir wd;
    REQUIRE(run_cli("prepare --synth --synth-users 25 --synth-items 16 --synth-periods 2 "
                    "--synth-noise 0.1 --synth-horizon 30 --seed 5 --cache " +
                    wd.file("ds.bin"))
                .exit_code == 0);
    REQUIRE(run_cli("train --cache " + wd.file("ds.bin") +
                    " --max-len 8 --hidden 8 --layers 2 --epochs 1 --batch-size 32 --seed 11 "
                    "--alpha 0.5 --checkpoint " +
                    wd.file("m.ckpt"))
                .exit_code == 0);
    auto res = run_cli("visualize --checkpoint " + wd.file("m.ckpt") + " --out " +
                       wd.file("amps.csv"));
    INFO(res.out);
    REQUIRE(res.exit_code == 0);
    auto csv = read_file(wd.file("amps.csv"));
    REQUIRE(csv.rfind("layer,filter,bin,amplitude\n", 0) == 0);

    // N=8 -> 5 bins; L=2 layers x 3 kinds x 5 bins = 30 data rows
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 31);
    // alpha=0.5, mode 4, layer 0 dynamic window is [2,5): bins 0,1 must be 0
    CHECK(csv.find("0,dynamic,0,0\n") != std::string::npos);
    CHECK(csv.find("0,dynamic,1,0\n") != std::string::npos);
    // every bin of the static partition is owned by exactly one layer
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);  // header
    std::vector<int> static_nonzero(5, 0);
    while (std::getline(lines, line)) {
        std::istringstream fields(line);
        std::string layer, kind, bin, amp;
        std::getline(fields, layer, ',');
        std::getline(fields, kind, ',');
        std::getline(fields, bin, ',');
        std::getline(fields, amp, ',');
        if (kind == "static" && std::stod(amp) != 0.0) ++static_nonzero[std::stoul(bin)];
    }
    for (int c : static_nonzero) CHECK(c == 1);
}
