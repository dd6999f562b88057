// Command-line front end: dataset preparation, training, evaluation,
// hyperparameter sweeps, and filter-spectrum export.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slime/data.hpp"
#include "slime/eval.hpp"
#include "slime/filter_mixer.hpp"
#include "slime/model.hpp"
#include "slime/objectives.hpp"
#include "slime/train.hpp"

namespace fs = std::filesystem;
using namespace slime;

namespace {

constexpr int kConfigVersion = 1;

struct RunConfig {
    ModelConfig model;
    std::string raw;
    std::string format = "tsv";
    std::string cache;
    std::string checkpoint;
    std::string report;
    std::string log_path;
    std::string out_dir = "sweep_out";
    long long min_timestamp = std::numeric_limits<long long>::min();
    bool skip_bad = false;
    std::size_t epochs = 100;
    std::size_t batch_size = 256;
    std::size_t eval_every = 1;
    std::size_t patience = 10;
    double lr = 0.001;
    std::size_t targets_per_user = 1;
    double noise_epsilon = 0.0;
    std::uint64_t noise_seed = 0;
    // synthetic generation
    bool synth = false;
    std::size_t synth_users = 200;
    std::size_t synth_items = 60;
    std::string synth_periods = "2,5";
    double synth_noise = 0.1;
    std::size_t synth_horizon = 64;
    std::size_t synth_cycle = 2;

    // stable key=value serialization; drives the provenance hash and lets a
    // checkpoint carry its own model configuration
    std::string serialize() const {
        std::ostringstream out;
        out << "version=" << kConfigVersion << "\n";
        out << "max_len=" << model.max_len << "\n";
        out << "hidden=" << model.hidden << "\n";
        out << "layers=" << model.layers << "\n";
        out << "alpha=" << model.alpha << "\n";
        out << "gamma=" << model.gamma << "\n";
        out << "lambda=" << model.lambda << "\n";
        out << "dropout_embed=" << model.dropout_embed << "\n";
        out << "dropout_block=" << model.dropout_block << "\n";
        out << "slide_mode=" << model.slide_mode << "\n";
        out << "vocab_size=" << model.vocab_size << "\n";
        out << "temperature=" << model.temperature << "\n";
        out << "seed=" << model.seed << "\n";
        out << "plain_ce=" << (model.plain_ce ? 1 : 0) << "\n";
        out << "epochs=" << epochs << "\n";
        out << "batch_size=" << batch_size << "\n";
        out << "eval_every=" << eval_every << "\n";
        out << "patience=" << patience << "\n";
        out << "lr=" << lr << "\n";
        out << "targets_per_user=" << targets_per_user << "\n";
        return out.str();
    }

    std::string hash() const {
        std::ostringstream out;
        out << std::hex << fnv1a_hash(serialize());
        return out.str();
    }

    // checkpoint fingerprint: provenance hash on the first line, then the
    // full config so eval/visualize can reconstruct the model
    std::string fingerprint() const { return hash() + "\n" + serialize(); }
};

std::map<std::string, std::string> parse_kv(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line without '=': " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

void apply_kv(RunConfig& rc, const std::map<std::string, std::string>& kv,
              const std::set<std::string>& skip) {
    auto it = kv.find("version");
    if (it == kv.end() || std::stoi(it->second) != kConfigVersion)
        throw ConfigError("config file missing or incompatible version field");
    auto get = [&](const std::string& key, auto& target) {
        if (skip.count(key)) return;
        auto f = kv.find(key);
        if (f == kv.end()) return;
        std::istringstream in(f->second);
        in >> target;
        if (in.fail()) throw ConfigError("bad value for config key " + key);
    };
    get("max_len", rc.model.max_len);
    get("hidden", rc.model.hidden);
    get("layers", rc.model.layers);
    get("alpha", rc.model.alpha);
    get("gamma", rc.model.gamma);
    get("lambda", rc.model.lambda);
    get("dropout_embed", rc.model.dropout_embed);
    get("dropout_block", rc.model.dropout_block);
    get("slide_mode", rc.model.slide_mode);
    get("vocab_size", rc.model.vocab_size);
    get("temperature", rc.model.temperature);
    get("seed", rc.model.seed);
    int plain = rc.model.plain_ce ? 1 : 0;
    get("plain_ce", plain);
    rc.model.plain_ce = plain != 0;
    get("epochs", rc.epochs);
    get("batch_size", rc.batch_size);
    get("eval_every", rc.eval_every);
    get("patience", rc.patience);
    get("lr", rc.lr);
    get("targets_per_user", rc.targets_per_user);
}

// relative data paths resolve against SLIME_DATA_ROOT when it is set
std::string resolve_path(const std::string& path) {
    if (path.empty()) return path;
    const char* root = std::getenv("SLIME_DATA_ROOT");
    if (!root || *root == '\0') return path;
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(root) / p).string();
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::istringstream in(csv);
    std::string tok;
    while (std::getline(in, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::istringstream in(csv);
    std::string tok;
    while (std::getline(in, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
    std::vector<std::size_t> out;
    for (int v : parse_int_list(csv)) {
        if (v < 0) throw ConfigError("negative value in list: " + csv);
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

SequenceDataset load_cached_dataset(const std::string& path) {
    SequenceDataset ds;
    std::uint64_t stored = 0;
    if (!read_dataset_cache(path, ds, stored))
        throw IoError("dataset cache not found: " + path);
    return ds;
}

// ----------------------------------------------------------------------------

int cmd_prepare(RunConfig& rc) {
    std::string raw_tag;
    InteractionLog log;
    if (rc.synth) {
        auto periods = parse_size_list(rc.synth_periods);
        auto synth = synth_periodic(rc.synth_users, rc.synth_items, periods, rc.synth_noise,
                                    rc.model.seed, rc.synth_horizon, rc.synth_cycle);
        log = std::move(synth.log);
        raw_tag = "synth:" + std::to_string(rc.synth_users) + ":" +
                  std::to_string(rc.synth_items) + ":" + rc.synth_periods + ":" +
                  std::to_string(rc.synth_noise) + ":" + std::to_string(rc.model.seed) + ":" +
                  std::to_string(rc.synth_horizon) + ":" + std::to_string(rc.synth_cycle);
    } else {
        if (rc.raw.empty()) throw ConfigError("prepare needs --raw or --synth");
        const std::string raw = resolve_path(rc.raw);
        const std::string tag = rc.format + "|" + std::to_string(rc.min_timestamp);
        std::uint64_t hash = file_content_hash(raw, tag);
        const std::string cache = resolve_path(rc.cache);
        if (!cache.empty()) {
            SequenceDataset cached;
            if (load_dataset_cache(cache, hash, cached)) {
                auto stats = dataset_stats(cached);
                std::cout << "cache hit: " << cache << "\n";
                std::cout << "users=" << stats.users << " items=" << stats.items
                          << " actions=" << stats.actions << " avg_length=" << stats.avg_length
                          << " sparsity=" << stats.sparsity << "\n";
                return 0;
            }
        }
        IngestReport report;
        log = ingest(raw, rc.format, rc.skip_bad, &report);
        for (const auto& [lineno, reason] : report.bad_lines)
            std::cerr << "skipped line " << lineno << ": " << reason << "\n";
        if (rc.min_timestamp != std::numeric_limits<long long>::min())
            log = filter_min_timestamp(log, rc.min_timestamp);
        raw_tag = "hash:" + std::to_string(hash);
    }

    auto filtered = five_core_filter(log);
    auto ds = build_dataset(filtered);
    auto stats = dataset_stats(ds);
    std::cout << "users=" << stats.users << " items=" << stats.items
              << " actions=" << stats.actions << " avg_length=" << stats.avg_length
              << " sparsity=" << stats.sparsity << "\n";
    if (!rc.cache.empty()) {
        const std::string cache = resolve_path(rc.cache);
        std::uint64_t hash =
            rc.synth ? fnv1a_hash(raw_tag)
                     : file_content_hash(resolve_path(rc.raw),
                                         rc.format + "|" + std::to_string(rc.min_timestamp));
        save_dataset_cache(cache, ds, hash);
        std::cout << "cached dataset: " << cache << "\n";
    }
    return 0;
}

int cmd_train(RunConfig& rc, bool freeze_filters) {
    auto ds = load_cached_dataset(resolve_path(rc.cache));
    rc.model.vocab_size = ds.num_items();
    rc.model.validate();
    auto splits = split_leave_one_out(ds);
    for (long u : splits.skipped_users)
        std::cerr << "warning: user " << ds.user_ids[static_cast<std::size_t>(u)]
                  << " has fewer than 3 interactions; excluded from the split\n";

    auto schedule =
        build_ramp_schedule(rc.model.num_bins(), rc.model.layers, rc.model.alpha,
                            rc.model.slide_mode);
    std::mt19937_64 rng(rc.model.seed);
    auto params = ModelParams::init(rc.model, rng);

    TrainConfig tc;
    tc.epochs = rc.epochs;
    tc.batch_size = rc.batch_size;
    tc.eval_every = rc.eval_every;
    tc.patience = rc.patience;
    tc.lr = rc.lr;
    tc.log_path = resolve_path(rc.log_path);
    tc.freeze_filters = freeze_filters;
    tc.targets_per_user = rc.targets_per_user;
    auto result = train_model(params, rc.model, schedule, splits, tc);

    std::cout << "steps=" << result.steps << " first_epoch_loss=" << result.first_epoch_loss
              << " last_epoch_loss=" << result.last_epoch_loss
              << " best_valid_ndcg10=" << result.best_valid_ndcg
              << " best_epoch=" << result.best_epoch
              << (result.early_stopped ? " (early stop)" : "") << "\n";
    if (!rc.checkpoint.empty())
        save_checkpoint(resolve_path(rc.checkpoint), result.best_params.named(),
                        rc.fingerprint());
    return 0;
}

// rebuild model configuration from the checkpoint's embedded config text
RunConfig config_from_checkpoint(const LoadedCheckpoint& ck) {
    auto newline = ck.fingerprint.find('\n');
    if (newline == std::string::npos)
        throw DataError("checkpoint carries no embedded configuration");
    std::istringstream in(ck.fingerprint.substr(newline + 1));
    RunConfig rc;
    apply_kv(rc, parse_kv(in), {});
    return rc;
}

int cmd_eval(RunConfig& rc, const std::string& split_name, const std::string& csv_path) {
    auto ck = load_checkpoint(resolve_path(rc.checkpoint));
    auto stored = config_from_checkpoint(ck);
    stored.model.validate();
    auto ds = load_cached_dataset(resolve_path(rc.cache));
    if (ds.num_items() != stored.model.vocab_size)
        throw DataError("dataset vocabulary does not match the checkpoint");
    auto splits = split_leave_one_out(ds);
    const auto& split = (split_name == "valid") ? splits.valid : splits.test;

    std::mt19937_64 rng(stored.model.seed);
    auto params = ModelParams::init(stored.model, rng);
    restore_params(params, ck);
    auto schedule = build_ramp_schedule(stored.model.num_bins(), stored.model.layers,
                                        stored.model.alpha, stored.model.slide_mode);
    auto report = evaluate(params, stored.model, schedule, split, {5, 10}, stored.hash(),
                           rc.noise_epsilon, rc.noise_seed);
    std::cout << report.to_json() << "\n";
    if (!rc.report.empty()) {
        std::ofstream out(resolve_path(rc.report));
        if (!out) throw IoError("cannot write report: " + rc.report);
        out << report.to_json() << "\n";
    }
    if (!csv_path.empty()) {
        const std::string resolved = resolve_path(csv_path);
        const bool fresh = !fs::exists(resolved);
        std::ofstream out(resolved, std::ios::app);
        if (!out) throw IoError("cannot append to csv: " + csv_path);
        if (fresh) out << RankingReport::csv_header({5, 10}) << "\n";
        out << report.to_csv_row() << "\n";
    }
    return 0;
}

int cmd_sweep(RunConfig& rc, const std::string& alphas_csv, const std::string& modes_csv,
              const std::string& epsilons_csv) {
    auto alphas = parse_double_list(alphas_csv);
    auto modes = parse_int_list(modes_csv);
    auto epsilons = parse_double_list(epsilons_csv);
    auto ds = load_cached_dataset(resolve_path(rc.cache));
    rc.model.vocab_size = ds.num_items();
    auto splits = split_leave_one_out(ds);

    const fs::path out_dir = resolve_path(rc.out_dir);
    fs::create_directories(out_dir);

    std::vector<std::string> rows;
    for (double alpha : alphas) {
        for (int mode : modes) {
            ModelParams trained_params;  // filled lazily once per (alpha, mode)
            bool trained = false;
            RunConfig cell_rc = rc;
            cell_rc.model.alpha = alpha;
            cell_rc.model.slide_mode = mode;
            for (double eps : epsilons) {
                std::ostringstream name;
                name << "cell_a" << alpha << "_m" << mode << "_e" << eps << ".csv";
                const fs::path cell = out_dir / name.str();
                if (fs::exists(cell)) {
                    std::ifstream in(cell);
                    std::string header, row;
                    std::getline(in, header);
                    std::getline(in, row);
                    rows.push_back(row);
                    std::cout << "skip completed cell " << cell.string() << "\n";
                    continue;
                }
                if (!trained) {
                    cell_rc.model.validate();
                    auto schedule =
                        build_ramp_schedule(cell_rc.model.num_bins(), cell_rc.model.layers,
                                            alpha, mode);
                    std::mt19937_64 rng(cell_rc.model.seed);
                    trained_params = ModelParams::init(cell_rc.model, rng);
                    TrainConfig tc;
                    tc.epochs = cell_rc.epochs;
                    tc.batch_size = cell_rc.batch_size;
                    tc.eval_every = cell_rc.eval_every;
                    tc.patience = cell_rc.patience;
                    tc.lr = cell_rc.lr;
                    tc.targets_per_user = cell_rc.targets_per_user;
                    auto result =
                        train_model(trained_params, cell_rc.model, schedule, splits, tc);
                    trained_params = result.best_params;
                    trained = true;
                }
                auto schedule =
                    build_ramp_schedule(cell_rc.model.num_bins(), cell_rc.model.layers, alpha,
                                        mode);
                auto report = evaluate(trained_params, cell_rc.model, schedule, splits.test,
                                       {5, 10}, cell_rc.hash(), eps, rc.noise_seed);
                std::ostringstream row;
                row << alpha << "," << mode << "," << eps << "," << report.to_csv_row();
                std::ofstream out(cell);
                out << "alpha,mode,epsilon," << RankingReport::csv_header({5, 10}) << "\n"
                    << row.str() << "\n";
                rows.push_back(row.str());
                std::cout << "cell " << cell.string() << " done\n";
            }
        }
    }
    std::ofstream agg(out_dir / "sweep.csv");
    agg << "alpha,mode,epsilon," << RankingReport::csv_header({5, 10}) << "\n";
    for (const auto& row : rows) agg << row << "\n";
    std::cout << "sweep rows=" << rows.size() << " -> " << (out_dir / "sweep.csv").string()
              << "\n";
    return 0;
}

int cmd_visualize(RunConfig& rc, const std::string& out_csv) {
    auto ck = load_checkpoint(resolve_path(rc.checkpoint));
    auto stored = config_from_checkpoint(ck);
    stored.model.validate();
    std::mt19937_64 rng(stored.model.seed);
    auto params = ModelParams::init(stored.model, rng);
    restore_params(params, ck);
    auto schedule = build_ramp_schedule(stored.model.num_bins(), stored.model.layers,
                                        stored.model.alpha, stored.model.slide_mode);
    std::vector<FilterParams> filters;
    for (const auto& layer : params.layers) filters.push_back(layer.filters);
    auto rows = filter_amplitude(filters, schedule);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_csv.empty()) {
        file.open(resolve_path(out_csv));
        if (!file) throw IoError("cannot write csv: " + out_csv);
        out = &file;
    }
    (*out) << "layer,filter,bin,amplitude\n";
    for (const auto& row : rows)
        (*out) << row.layer << "," << row.filter_kind << "," << row.bin << "," << row.amplitude
               << "\n";
    if (!out_csv.empty()) std::cout << "fingerprint=" << stored.hash() << "\n";
    return 0;
}

void add_model_flags(CLI::App* cmd, RunConfig& rc) {
    cmd->add_option("--max-len", rc.model.max_len);
    cmd->add_option("--hidden", rc.model.hidden);
    cmd->add_option("--layers", rc.model.layers);
    cmd->add_option("--alpha", rc.model.alpha);
    cmd->add_option("--gamma", rc.model.gamma);
    cmd->add_option("--lambda", rc.model.lambda);
    cmd->add_option("--dropout-embed", rc.model.dropout_embed);
    cmd->add_option("--dropout-block", rc.model.dropout_block);
    cmd->add_option("--slide-mode", rc.model.slide_mode);
    cmd->add_option("--temperature", rc.model.temperature);
    cmd->add_option("--seed", rc.model.seed);
    cmd->add_flag("--plain-ce", rc.model.plain_ce);
    cmd->add_option("--epochs", rc.epochs);
    cmd->add_option("--batch-size", rc.batch_size);
    cmd->add_option("--eval-every", rc.eval_every);
    cmd->add_option("--patience", rc.patience);
    cmd->add_option("--lr", rc.lr);
    cmd->add_option("--targets-per-user", rc.targets_per_user);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frequency-domain sequential recommender toolkit"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_path, split_name = "test", csv_path, out_csv;
    std::string alphas = "0.5", modes = "4", epsilons = "0";
    bool freeze_filters = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value config file (flags override)");
        cmd->add_option("--cache", rc.cache, "dataset cache path");
    };

    auto* prepare = app.add_subcommand("prepare", "ingest, filter, and cache a dataset");
    add_common(prepare);
    prepare->add_option("--raw", rc.raw);
    prepare->add_option("--format", rc.format)->check(CLI::IsMember({"tsv", "csv"}));
    prepare->add_flag("--skip-bad", rc.skip_bad);
    prepare->add_option("--min-timestamp", rc.min_timestamp);
    prepare->add_flag("--synth", rc.synth, "generate the synthetic periodic dataset");
    prepare->add_option("--synth-users", rc.synth_users);
    prepare->add_option("--synth-items", rc.synth_items);
    prepare->add_option("--synth-periods", rc.synth_periods);
    prepare->add_option("--synth-noise", rc.synth_noise);
    prepare->add_option("--synth-horizon", rc.synth_horizon);
    prepare->add_option("--synth-cycle", rc.synth_cycle);
    prepare->add_option("--seed", rc.model.seed);

    auto* train = app.add_subcommand("train", "train a model on a cached dataset");
    add_common(train);
    add_model_flags(train, rc);
    train->add_option("--checkpoint", rc.checkpoint);
    train->add_option("--log", rc.log_path, "JSONL step log");
    train->add_flag("--freeze-filters", freeze_filters, "keep filter planes at init (ablation)");

    auto* eval = app.add_subcommand("eval", "rank a split with a trained checkpoint");
    add_common(eval);
    eval->add_option("--checkpoint", rc.checkpoint)->required();
    eval->add_option("--split", split_name)->check(CLI::IsMember({"valid", "test"}));
    eval->add_option("--noise-epsilon", rc.noise_epsilon);
    eval->add_option("--noise-seed", rc.noise_seed);
    eval->add_option("--report", rc.report, "write the JSON report here");
    eval->add_option("--csv", csv_path, "append a CSV row here");

    auto* sweep = app.add_subcommand("sweep", "grid over alpha, slide mode, and noise epsilon");
    add_common(sweep);
    add_model_flags(sweep, rc);
    sweep->add_option("--alphas", alphas, "comma-separated alpha grid");
    sweep->add_option("--modes", modes, "comma-separated slide-mode grid");
    sweep->add_option("--epsilons", epsilons, "comma-separated noise grid");
    sweep->add_option("--out-dir", rc.out_dir);
    sweep->add_option("--noise-seed", rc.noise_seed);

    auto* visualize = app.add_subcommand("visualize", "export filter amplitudes as CSV");
    visualize->add_option("--checkpoint", rc.checkpoint)->required();
    visualize->add_option("--out", out_csv, "CSV output path (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) {
            std::ifstream in(resolve_path(config_path));
            if (!in) throw IoError("cannot open config file: " + config_path);
            // flags the user passed explicitly win over file values
            std::set<std::string> overridden;
            auto* sub = app.get_subcommands().front();
            for (const auto* opt : sub->get_options())
                if (opt->count() > 0) {
                    std::string name = opt->get_name();
                    if (name.rfind("--", 0) == 0) name = name.substr(2);
                    for (auto& c : name)
                        if (c == '-') c = '_';
                    overridden.insert(name);
                }
            apply_kv(rc, parse_kv(in), overridden);
        }
        if (app.got_subcommand(prepare)) return cmd_prepare(rc);
        if (app.got_subcommand(train)) return cmd_train(rc, freeze_filters);
        if (app.got_subcommand(eval)) return cmd_eval(rc, split_name, csv_path);
        if (app.got_subcommand(sweep)) return cmd_sweep(rc, alphas, modes, epsilons);
        if (app.got_subcommand(visualize)) return cmd_visualize(rc, out_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
