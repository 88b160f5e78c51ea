// Command-line front end: dataset synthesis and conversion, episodic
// evaluation, fusion-head training, and the shared-episode ablation matrix.
//
// Exit codes: 0 success, 2 usage, 3 IO, 4 data shape.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "adm/model.hpp"
#include "adm/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitShape = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw adm::IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out.good()) throw adm::IoError("write failure on " + path.string());
}

void emit_json(const ordered_json& j, const std::string& output_path) {
    const std::string text = j.dump(2) + "\n";
    if (output_path.empty())
        std::cout << text;
    else
        write_text(output_path, text);
}

adm::ModelParams load_params_or_default(const std::string& params_path,
                                        const std::string& std_mode) {
    adm::ModelParams params;
    if (!params_path.empty()) {
        std::ifstream in(params_path);
        if (!in) throw adm::IoError("cannot open " + params_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw adm::FormatError("params JSON parse error: " + std::string(e.what()));
        }
        params = adm::params_from_json(j);
    }
    if (!std_mode.empty()) params.head.mode = adm::parse_standardize_mode(std_mode);
    return params;
}

struct DatasetArgs {
    std::string data_path;
    std::string split_path;
    std::string role = "test";
};

struct LoadedDataset {
    adm::LabeledDataset dataset;
    std::vector<uint32_t> class_ids;
};

LoadedDataset load_for_eval(const DatasetArgs& args, int ways) {
    LoadedDataset out;
    out.dataset = adm::load_dataset(args.data_path);
    if (args.split_path.empty()) {
        for (const auto& cl : out.dataset.classes) out.class_ids.push_back(cl.class_id);
    } else {
        out.class_ids = adm::load_split(args.split_path).role(args.role);
    }
    if (static_cast<int>(out.class_ids.size()) < ways)
        throw ShapeError("split role '" + args.role + "' has " +
                         std::to_string(out.class_ids.size()) + " classes, need " +
                         std::to_string(ways));
    return out;
}

std::string format_table(const std::vector<adm::RowResult>& rows) {
    std::vector<adm::RowResult> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.mean_acc > b.mean_acc; });
    size_t name_w = 7;
    for (const auto& r : sorted) name_w = std::max(name_w, r.name.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "measure"
       << "accuracy\n";
    for (const auto& r : sorted) {
        os << std::left << std::setw(static_cast<int>(name_w) + 2) << r.name << std::fixed
           << std::setprecision(4) << r.mean_acc << " +/- " << r.ci95 << "\n";
    }
    return os.str();
}

// ---- synth -------------------------------------------------------------------

struct SynthArgs {
    adm::SynthSpec spec;
    std::string cov_name = "isotropic";
    uint64_t seed = 0;
    std::string output;
    std::vector<double> split_frac{0.6, 0.2, 0.2};
};

int run_synth(const SynthArgs& args) {
    adm::SynthSpec spec = args.spec;
    spec.cov = adm::parse_cov_kind(args.cov_name);
    const adm::SynthResult result = adm::synth_gaussian_dataset(spec, args.seed);
    const fs::path data_path = args.output;
    adm::save_dataset(result.dataset, data_path);

    if (args.split_frac.size() != 3)
        throw UsageError("--split-frac needs exactly three fractions");
    const double total = args.split_frac[0] + args.split_frac[1] + args.split_frac[2];
    if (!(total > 0.0)) throw UsageError("--split-frac fractions must sum to > 0");
    const int train_n = static_cast<int>(std::floor(spec.classes * args.split_frac[0] / total));
    const int val_n = static_cast<int>(std::floor(spec.classes * args.split_frac[1] / total));
    adm::SplitSpec split;
    for (int i = 0; i < spec.classes; ++i) {
        const auto id = result.dataset.classes[i].class_id;
        if (i < train_n) split.train.push_back(id);
        else if (i < train_n + val_n) split.val.push_back(id);
        else split.test.push_back(id);
    }
    const fs::path split_path = data_path.string() + ".split.json";
    adm::save_split(split, split_path);

    // free-form sidecar with class names; never required for correctness
    ordered_json meta;
    for (const auto& cl : result.dataset.classes)
        meta["class_names"][std::to_string(cl.class_id)] = "class_" + std::to_string(cl.class_id);
    write_text(data_path.string() + ".meta.json", meta.dump(2) + "\n");

    std::cout << "dataset: " << data_path.string() << " (" << fs::file_size(data_path)
              << " bytes, " << spec.classes << " classes, " << spec.images_per_class
              << " images/class)\n"
              << "split:   " << split_path.string() << " (train " << split.train.size() << ", val "
              << split.val.size() << ", test " << split.test.size() << ")\n";
    return 0;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
    DatasetArgs data;
    std::string measure = "kl";
    bool cms = false;
    adm::EvalOptions options;
    std::string std_mode;
    std::string params_path;
    std::string output;
};

int run_eval(const EvalArgs& args) {
    adm::RowSpec row = adm::parse_row_spec(args.measure);
    if (args.cms && !row.cms) {
        if (row.kind == adm::MeasureKind::I2C && !row.adm)
            throw UsageError("--cms requires a distribution-level measure or adm");
        row = adm::parse_row_spec(args.measure + "-cms");
    }
    const LoadedDataset loaded = load_for_eval(args.data, args.options.spec.ways);
    const adm::ModelParams params = load_params_or_default(args.params_path, args.std_mode);
    const adm::EvalReport report =
        adm::evaluate(loaded.dataset, loaded.class_ids, row, args.options, params);

    emit_json(adm::report_to_json(report), args.output);
    std::cout << format_table({{row.name, report.mean_acc, report.ci95, {}}});
    return 0;
}

// ---- ablate ------------------------------------------------------------------

struct AblateArgs {
    DatasetArgs data;
    std::string rows_csv;
    adm::EvalOptions options;
    std::string std_mode;
    std::string params_path;
    std::string output;
};

int run_ablate(const AblateArgs& args) {
    std::vector<adm::RowSpec> rows;
    if (args.rows_csv.empty()) {
        rows = adm::default_ablation_rows();
    } else {
        std::stringstream ss(args.rows_csv);
        std::string name;
        while (std::getline(ss, name, ',')) {
            if (!name.empty()) rows.push_back(adm::parse_row_spec(name));
        }
        if (rows.empty()) throw UsageError("--rows lists no rows");
    }

    const LoadedDataset loaded = load_for_eval(args.data, args.options.spec.ways);
    const adm::ModelParams params = load_params_or_default(args.params_path, args.std_mode);
    const std::vector<adm::RowResult> results =
        adm::evaluate_rows(loaded.dataset, loaded.class_ids, rows, args.options, params);

    ordered_json j;
    j["seed"] = args.options.seed;
    j["tasks"] = args.options.tasks;
    j["reps"] = args.options.reps;
    j["rows"] = ordered_json::array();
    for (const auto& r : results)
        j["rows"].push_back({{"name", r.name}, {"mean_acc", r.mean_acc}, {"ci95", r.ci95}});
    j["config"] = {{"way", args.options.spec.ways},
                   {"shot", args.options.spec.shots},
                   {"query", args.options.spec.queries_per_class},
                   {"lambda", args.options.lambda},
                   {"k", args.options.topk},
                   {"std_mode", adm::standardize_mode_name(params.head.mode)}};
    emit_json(j, args.output);
    std::cout << format_table(results);
    return 0;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
    DatasetArgs data;  // role defaults to "train"
    std::string eval_role = "test";
    adm::TrainConfig config;
    std::string trainable = "fusion";
    bool cms = false;
    std::string std_mode = "episode-stats";
    uint64_t seed = 0;
    int eval_tasks = 200;
    int workers = 1;
    std::string output = "params.json";
};

int run_train(const TrainArgs& args) {
    adm::TrainConfig config = args.config;
    config.trainable = adm::parse_trainable_set(args.trainable);
    config.cms = args.cms;

    const adm::LabeledDataset dataset = adm::load_dataset(args.data.data_path);
    std::vector<uint32_t> train_ids, eval_ids;
    if (args.data.split_path.empty()) {
        for (const auto& cl : dataset.classes) train_ids.push_back(cl.class_id);
        eval_ids = train_ids;
    } else {
        const adm::SplitSpec split = adm::load_split(args.data.split_path);
        train_ids = split.role(args.data.role);
        eval_ids = split.role(args.eval_role);
    }
    if (static_cast<int>(train_ids.size()) < config.spec.ways)
        throw ShapeError("train role has " + std::to_string(train_ids.size()) +
                         " classes, need " + std::to_string(config.spec.ways));

    adm::ModelParams init;
    init.head.mode = adm::parse_standardize_mode(args.std_mode);
    if (config.trainable == adm::TrainableSet::FusionAndEmbedding)
        init.embedding = adm::Embedding::linear(adm::Mat::identity(dataset.descriptor_dim()));

    const adm::TrainResult result = adm::train(dataset, train_ids, config, init, args.seed);

    emit_json(adm::params_to_json(result.params), args.output);
    const std::string loss_path = args.output + ".loss.json";
    emit_json(ordered_json(result.epoch_mean_loss), loss_path);

    std::cout << "params: " << args.output << "\nloss curve: " << loss_path << "\n";
    if (!result.epoch_mean_loss.empty())
        std::cout << "first-epoch loss " << result.epoch_mean_loss.front() << ", last-epoch loss "
                  << result.epoch_mean_loss.back() << "\n";

    if (static_cast<int>(eval_ids.size()) >= config.spec.ways) {
        adm::EvalOptions opts;
        opts.spec = config.spec;
        opts.lambda = config.lambda;
        opts.topk = config.topk;
        opts.tasks = args.eval_tasks;
        opts.reps = 1;
        opts.seed = args.seed;
        opts.workers = args.workers;
        const adm::RowSpec row = adm::parse_row_spec(config.cms ? "adm-cms" : "adm");
        const adm::EvalReport report = adm::evaluate(dataset, eval_ids, row, opts, result.params);
        std::cout << "eval (" << args.eval_role << ", " << row.name << "): " << std::fixed
                  << std::setprecision(4) << report.mean_acc << " +/- " << report.ci95 << "\n";
    }
    return 0;
}

// ---- convert -----------------------------------------------------------------

struct ConvertArgs {
    std::string input;
    std::string output;
};

// Plain-text interchange: "c=<int>" header; per image a "class <id>" line,
// then one line per descriptor with c decimals; images separated by blank
// lines.
adm::LabeledDataset parse_text_dataset(std::istream& in) {
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& what) -> void {
        throw UsageError("line " + std::to_string(line_no) + ": " + what);
    };

    int c = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line.rfind("c=", 0) != 0) fail("expected header 'c=<int>'");
        try {
            c = std::stoi(line.substr(2));
        } catch (...) {
            fail("bad descriptor dimension in header");
        }
        if (c < 1) fail("descriptor dimension must be positive");
        break;
    }
    if (c < 0) throw UsageError("line 0: empty input, no 'c=<int>' header");

    std::map<uint32_t, std::vector<adm::DescriptorSet>> by_class;
    std::vector<uint32_t> class_order;

    std::optional<uint32_t> current_class;
    std::vector<float> values;
    int rows = 0;
    auto flush_image = [&]() {
        if (rows == 0) fail("image with no descriptor rows");
        if (!by_class.count(*current_class)) class_order.push_back(*current_class);
        by_class[*current_class].emplace_back(rows, c, values);
        values.clear();
        rows = 0;
        current_class.reset();
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            if (current_class) flush_image();
            continue;
        }
        if (line.rfind("class ", 0) == 0) {
            if (current_class) flush_image();
            try {
                const long long id = std::stoll(line.substr(6));
                if (id < 0) throw std::out_of_range("negative");
                current_class = static_cast<uint32_t>(id);
            } catch (...) {
                fail("bad class id");
            }
            continue;
        }
        if (!current_class) fail("descriptor row before any 'class <id>' line");
        std::istringstream ls(line);
        int got = 0;
        double v;
        while (ls >> v) {
            values.push_back(static_cast<float>(v));
            ++got;
        }
        if (!ls.eof()) fail("non-numeric token");
        if (got != c)
            fail("expected " + std::to_string(c) + " values, found " + std::to_string(got));
        ++rows;
    }
    ++line_no;
    if (current_class) flush_image();

    if (class_order.empty()) throw UsageError("no images found");
    adm::LabeledDataset ds;
    for (uint32_t id : class_order) ds.classes.push_back({id, std::move(by_class[id])});
    ds.validate();
    return ds;
}

int run_convert(const ConvertArgs& args) {
    std::ifstream in(args.input);
    if (!in) throw adm::IoError("cannot open " + args.input);
    const adm::LabeledDataset ds = parse_text_dataset(in);
    adm::save_dataset(ds, args.output);
    std::cout << "wrote " << args.output << " (" << ds.classes.size() << " classes)\n";
    return 0;
}

void add_eval_options(CLI::App* cmd, adm::EvalOptions& options, DatasetArgs& data) {
    cmd->add_option("--data", data.data_path, "ADMD dataset path")->required();
    cmd->add_option("--split", data.split_path, "split JSON path (omit to use every class)");
    cmd->add_option("--role", data.role, "split role to evaluate on")
        ->check(CLI::IsMember({"train", "val", "test"}));
    cmd->add_option("--way", options.spec.ways, "classes per episode")->check(CLI::PositiveNumber);
    cmd->add_option("--shot", options.spec.shots, "support images per class")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--query", options.spec.queries_per_class, "query images per class")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--lambda", options.lambda, "covariance shrinkage in [0,1]");
    cmd->add_option("--topk", options.topk, "top-k for the i2c measure")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--tasks", options.tasks, "episodes per repetition")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--reps", options.reps, "repetitions")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", options.seed, "episode-stream seed")->required();
    cmd->add_option("--workers", options.workers,
                    "worker threads (results are identical for any count)")
        ->check(CLI::PositiveNumber);
}

int dispatch(const CLI::App& app, SynthArgs& synth, EvalArgs& eval, AblateArgs& ablate,
             TrainArgs& train, ConvertArgs& convert) {
    if (app.got_subcommand("synth")) return run_synth(synth);
    if (app.got_subcommand("eval")) return run_eval(eval);
    if (app.got_subcommand("ablate")) return run_ablate(ablate);
    if (app.got_subcommand("train")) return run_train(train);
    if (app.got_subcommand("convert")) return run_convert(convert);
    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distribution-measure few-shot classification toolkit"};
    app.require_subcommand(1);

    SynthArgs synth;
    CLI::App* synth_cmd =
        app.add_subcommand("synth", "generate a synthetic Gaussian-class dataset");
    synth_cmd->add_option("--classes", synth.spec.classes, "number of classes")
        ->required()
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--images", synth.spec.images_per_class, "images per class")
        ->required()
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--n", synth.spec.descriptors_per_image, "descriptors per image")
        ->required()
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--c", synth.spec.dim, "descriptor dimension")
        ->required()
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--sep", synth.spec.separation, "class-mean sphere radius");
    synth_cmd->add_option("--cov", synth.cov_name, "isotropic|diag-random|random-spd");
    synth_cmd->add_option("--seed", synth.seed, "generator seed")->required();
    synth_cmd->add_option("-o,--output", synth.output, "output ADMD path")->required();
    synth_cmd
        ->add_option("--split-frac", synth.split_frac,
                     "train/val/test class fractions (three values)")
        ->expected(3);

    EvalArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate one measure");
    add_eval_options(eval_cmd, eval.options, eval.data);
    eval_cmd->add_option("--measure", eval.measure, "kl|wass-approx|wass-exact|i2c|adm");
    eval_cmd->add_flag("--cms", eval.cms, "contrastive wrapper on the distribution branch");
    eval_cmd->add_option("--std-mode", eval.std_mode, "episode-stats|running-stats|off");
    eval_cmd->add_option("--params", eval.params_path, "trained params JSON");
    eval_cmd->add_option("-o,--output", eval.output, "write report JSON here instead of stdout");

    AblateArgs ablate;
    ablate.options.reps = 1;
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "measure matrix over shared episodes");
    add_eval_options(ablate_cmd, ablate.options, ablate.data);
    ablate_cmd->add_option(
        "--rows", ablate.rows_csv,
        "comma list of rows (default: wass-approx,wass-approx-cms,kl,kl-cms,i2c,adm)");
    ablate_cmd->add_option("--std-mode", ablate.std_mode, "episode-stats|running-stats|off");
    ablate_cmd->add_option("--params", ablate.params_path, "trained params JSON");
    ablate_cmd->add_option("-o,--output", ablate.output,
                           "write matrix JSON here instead of stdout");

    TrainArgs train;
    train.data.role = "train";
    CLI::App* train_cmd = app.add_subcommand("train", "train the fusion head (and embedding)");
    train_cmd->add_option("--data", train.data.data_path, "ADMD dataset path")->required();
    train_cmd->add_option("--split", train.data.split_path, "split JSON path");
    train_cmd->add_option("--role", train.data.role, "split role to train on");
    train_cmd->add_option("--eval-role", train.eval_role, "split role for the final report");
    train_cmd->add_option("--way", train.config.spec.ways, "classes per episode");
    train_cmd->add_option("--shot", train.config.spec.shots, "support images per class");
    train_cmd->add_option("--query", train.config.spec.queries_per_class, "queries per class");
    train_cmd->add_option("--lambda", train.config.lambda, "covariance shrinkage");
    train_cmd->add_option("--topk", train.config.topk, "top-k for the i2c measure");
    train_cmd->add_option("--epochs", train.config.epochs, "training epochs");
    train_cmd->add_option("--episodes", train.config.episodes_per_epoch, "episodes per epoch");
    train_cmd->add_option("--lr", train.config.lr, "initial learning rate");
    train_cmd->add_option("--lr-decay", train.config.lr_decay, "learning-rate decay factor");
    train_cmd->add_option("--decay-every", train.config.decay_every, "epochs between decays");
    train_cmd->add_option("--trainable", train.trainable, "fusion|fusion+embedding");
    train_cmd->add_flag("--cms", train.cms, "train with the contrastive KL branch");
    train_cmd->add_option("--std-mode", train.std_mode, "episode-stats|running-stats|off");
    train_cmd->add_option("--seed", train.seed, "training seed")->required();
    train_cmd->add_option("--eval-tasks", train.eval_tasks, "episodes in the final report");
    train_cmd->add_option("--workers", train.workers, "worker threads for the final report");
    train_cmd->add_option("-o,--output", train.output, "params JSON path");

    ConvertArgs convert;
    CLI::App* convert_cmd = app.add_subcommand("convert", "convert text interchange to ADMD");
    convert_cmd->add_option("-i,--input", convert.input, "text input path")->required();
    convert_cmd->add_option("-o,--output", convert.output, "output ADMD path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        return dispatch(app, synth, eval, ablate, train, convert);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const adm::InvalidSpecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const adm::InsufficientClassesError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const adm::InsufficientImagesError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const adm::InconsistentDimError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const adm::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const adm::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
