#include "poisonlab/cli.hpp"

#include "poisonlab/attack.hpp"
#include "poisonlab/csvio.hpp"
#include "poisonlab/dataset.hpp"
#include "poisonlab/detect.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/harness.hpp"
#include "poisonlab/linmod.hpp"
#include "poisonlab/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace poisonlab {

namespace {

namespace fs = std::filesystem;

struct RunConfig {
    std::string dataset = "toy";
    std::string data_dir = "data/uci";
    int label_col = -1;
    std::string categorical_cols; // comma-separated indices for csv datasets
    bool csv_header = false;
    int toy_per_class = 25;
    double train_fraction = 0.8;

    double lambda = 0.1;
    std::string reg = "lasso";
    double rho = 0.5;

    int q = 1;
    double sigma = 0.05;
    int steps = 200;
    std::string penalty = "none"; // none | dt | knn
    double d_att = 1.0;
    double phi = 0.005;
    int knn_k = 3;
    double power = 2.0;

    std::string detector = "dt";
    double d_def = 1.0;
    double nu = 0.1;
    double gamma = 0.0;
    int trees = 100;
    int subsample = 256;
    int lof_k = 20;

    std::uint64_t seed = 0;
    std::string out;
    std::string points_file;
    int jobs = 1;

    nlohmann::json to_json() const {
        return {{"dataset", dataset},
                {"data-dir", data_dir},
                {"label-col", label_col},
                {"categorical-cols", categorical_cols},
                {"csv-header", csv_header},
                {"toy-per-class", toy_per_class},
                {"train-fraction", train_fraction},
                {"lambda", lambda},
                {"reg", reg},
                {"rho", rho},
                {"q", q},
                {"sigma", sigma},
                {"steps", steps},
                {"penalty", penalty},
                {"d-att", d_att},
                {"phi", phi},
                {"knn-k", knn_k},
                {"power", power},
                {"detector", detector},
                {"d-def", d_def},
                {"nu", nu},
                {"gamma", gamma},
                {"trees", trees},
                {"subsample", subsample},
                {"lof-k", lof_k},
                {"seed", seed},
                {"out", out},
                {"points", points_file},
                {"jobs", jobs}};
    }
};

// Config file: a flat JSON object whose keys are the long option names.
// Precedence is defaults < config file < command-line flags.
void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed config file " + path + ": " + e.what());
    }
    if (!doc.is_object()) throw DataError("config file must hold a JSON object: " + path);
    for (const auto& [key, value] : doc.items()) {
        try {
            if (key == "dataset") cfg.dataset = value.get<std::string>();
            else if (key == "data-dir") cfg.data_dir = value.get<std::string>();
            else if (key == "label-col") cfg.label_col = value.get<int>();
            else if (key == "categorical-cols") cfg.categorical_cols = value.get<std::string>();
            else if (key == "csv-header") cfg.csv_header = value.get<bool>();
            else if (key == "toy-per-class") cfg.toy_per_class = value.get<int>();
            else if (key == "train-fraction") cfg.train_fraction = value.get<double>();
            else if (key == "lambda") cfg.lambda = value.get<double>();
            else if (key == "reg") cfg.reg = value.get<std::string>();
            else if (key == "rho") cfg.rho = value.get<double>();
            else if (key == "q") cfg.q = value.get<int>();
            else if (key == "sigma") cfg.sigma = value.get<double>();
            else if (key == "steps") cfg.steps = value.get<int>();
            else if (key == "penalty") cfg.penalty = value.get<std::string>();
            else if (key == "d-att") cfg.d_att = value.get<double>();
            else if (key == "phi") cfg.phi = value.get<double>();
            else if (key == "knn-k") cfg.knn_k = value.get<int>();
            else if (key == "power") cfg.power = value.get<double>();
            else if (key == "detector") cfg.detector = value.get<std::string>();
            else if (key == "d-def") cfg.d_def = value.get<double>();
            else if (key == "nu") cfg.nu = value.get<double>();
            else if (key == "gamma") cfg.gamma = value.get<double>();
            else if (key == "trees") cfg.trees = value.get<int>();
            else if (key == "subsample") cfg.subsample = value.get<int>();
            else if (key == "lof-k") cfg.lof_k = value.get<int>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "out") cfg.out = value.get<std::string>();
            else if (key == "points") cfg.points_file = value.get<std::string>();
            else if (key == "jobs") cfg.jobs = value.get<int>();
            else throw std::invalid_argument("unknown config key '" + key + "'");
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument("config key '" + key + "' has the wrong type");
        }
    }
}

void echo_config(const RunConfig& cfg, const std::string& subcommand) {
    fs::create_directories(cfg.out);
    nlohmann::json doc = cfg.to_json();
    doc["subcommand"] = subcommand;
    std::ofstream out(fs::path(cfg.out) / "config.json");
    if (!out) throw DataError("cannot write config echo under " + cfg.out);
    out << doc.dump(2) << '\n';
}

bool is_uci_name(const std::string& name) {
    return name == "spambase" || name == "credit-approval" || name == "congressional-voting";
}

Regularizer regularizer_from(const RunConfig& cfg) { return make_regularizer(cfg.reg, cfg.rho); }

PenaltyTerm penalty_from(const RunConfig& cfg) {
    if (cfg.penalty == "none") return PenaltyTerm::none();
    if (cfg.penalty == "dt") return PenaltyTerm::distance_threshold(cfg.d_att);
    if (cfg.penalty == "knn") return PenaltyTerm::knn_power(cfg.phi, cfg.knn_k, cfg.power);
    throw std::invalid_argument("unknown penalty '" + cfg.penalty + "' (none|dt|knn)");
}

ScorerParams scorer_params_from(const RunConfig& cfg) {
    ScorerParams p;
    p.d_def = cfg.d_def;
    p.nu = cfg.nu;
    p.gamma = cfg.gamma;
    p.trees = cfg.trees;
    p.subsample = cfg.subsample;
    p.k = cfg.lof_k;
    return p;
}

// Prepared working data for prep/train/attack/score: UCI names are split and
// standardized (attack reference = training split, in normalized space); toy
// and csv datasets are used as-is with a data-driven feasible box.
struct Resolved {
    Dataset train;
    Dataset test; // empty (n()==0) when the dataset is not split
    FeasibleDomain domain;
    bool has_test = false;
};

Resolved resolve_dataset(const RunConfig& cfg, bool do_split) {
    Resolved r;
    if (cfg.dataset == "toy") {
        GaussianToyConfig toy = calibrated_toy_config();
        toy.samples_per_class = cfg.toy_per_class;
        toy.seed = derive_seed(cfg.seed, 11);
        Dataset all = gen_gaussian_toy(toy);
        if (do_split) {
            auto [train, test] = split(all, cfg.train_fraction, derive_seed(cfg.seed, 1));
            r.train = std::move(train);
            r.test = std::move(test);
            r.has_test = true;
        } else {
            r.train = std::move(all);
        }
        r.domain = FeasibleDomain::from_data(r.train.features, 0.1);
        return r;
    }
    if (is_uci_name(cfg.dataset)) {
        PreparedData data = prepare_uci(cfg.dataset, cfg.data_dir, cfg.seed, cfg.train_fraction);
        r.train = std::move(data.train);
        r.test = std::move(data.test);
        r.domain = data.domain;
        r.has_test = true;
        return r;
    }
    // A csv path with a schema given by flags.
    if (cfg.label_col < 0)
        throw std::invalid_argument("csv datasets need --label-col");
    CsvSchema schema;
    schema.has_header = cfg.csv_header;
    schema.label_column = cfg.label_col;
    if (!cfg.categorical_cols.empty()) {
        std::stringstream ss(cfg.categorical_cols);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) schema.categorical_columns.insert(std::stoi(item));
        }
    }
    Dataset all = load_csv(cfg.dataset, schema);
    if (do_split) {
        auto [train, test] = split(all, cfg.train_fraction, derive_seed(cfg.seed, 1));
        r.train = std::move(train);
        r.test = std::move(test);
        r.has_test = true;
    } else {
        r.train = std::move(all);
    }
    r.domain = FeasibleDomain::from_data(r.train.features, 0.1);
    return r;
}

CsvTable dataset_to_table(const Dataset& d) {
    CsvTable t;
    t.header = d.feature_names;
    t.header.push_back("label");
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        std::vector<std::string> cells;
        for (Eigen::Index j = 0; j < d.dim(); ++j) cells.push_back(fmt_g12(d.features(i, j)));
        cells.push_back(fmt_g12(d.labels[i]));
        t.add_row(std::move(cells));
    }
    return t;
}

int run_prep(const RunConfig& cfg) {
    // For UCI names this re-derives the raw split so the emitted files match
    // what train/attack would see internally.
    Resolved r = resolve_dataset(cfg, true);
    echo_config(cfg, "prep");
    write_csv(fs::path(cfg.out) / "train.csv", dataset_to_table(r.train));
    if (r.has_test) write_csv(fs::path(cfg.out) / "test.csv", dataset_to_table(r.test));
    std::cout << "prep: train n=" << r.train.n() << " d=" << r.train.dim();
    if (r.has_test) std::cout << " test n=" << r.test.n();
    std::cout << '\n';
    return 0;
}

int run_train(const RunConfig& cfg) {
    Resolved r = resolve_dataset(cfg, true);
    LinearModel model = fit(r.train, cfg.lambda, regularizer_from(cfg));
    std::cout << "train accuracy: " << fmt_g12(accuracy(model, r.train)) << '\n';
    if (r.has_test)
        std::cout << "test accuracy: " << fmt_g12(accuracy(model, r.test)) << '\n';
    if (!model.converged)
        std::cerr << "warning: coordinate descent did not converge in "
                  << model.sweeps << " sweeps\n";
    if (!cfg.out.empty()) {
        echo_config(cfg, "train");
        save_model(model, (fs::path(cfg.out) / "model.json").string());
    }
    return 0;
}

int run_attack(const RunConfig& cfg) {
    const bool uci = is_uci_name(cfg.dataset);
    Resolved r = resolve_dataset(cfg, uci);
    AttackConfig atk;
    atk.reference = r.train;
    atk.num_points = cfg.q;
    atk.step_size = cfg.sigma;
    atk.num_steps = cfg.steps;
    atk.lambda = cfg.lambda;
    atk.reg = regularizer_from(cfg);
    atk.domain = r.domain;
    atk.penalty = penalty_from(cfg);
    atk.seed = derive_seed(cfg.seed, 2);
    AttackTrace trace = poison(atk);

    echo_config(cfg, "attack");
    trace.write_csv(fs::path(cfg.out) / "trace.csv");
    std::ofstream summary(fs::path(cfg.out) / "summary.json");
    summary << trace.summary().dump(2) << '\n';
    std::cout << "attack: wrote " << trace.rows.size() << " trace rows to " << cfg.out << '\n';
    return 0;
}

int run_score(const RunConfig& cfg) {
    if (cfg.points_file.empty()) throw std::invalid_argument("score needs --points");
    const bool uci = is_uci_name(cfg.dataset);
    Resolved r = resolve_dataset(cfg, uci);
    OutlierScorer scorer = fit_scorer(scorer_kind_from_name(cfg.detector),
                                      scorer_params_from(cfg), r.train, derive_seed(cfg.seed, 3));

    // Points are read in the prepared (normalized for UCI) feature space, the
    // same space attack traces are written in.
    std::vector<Eigen::VectorXd> points;
    for (const auto& row : read_csv_rows(cfg.points_file)) {
        if (static_cast<Eigen::Index>(row.size()) != r.train.dim())
            throw DataError("points file row width does not match the dataset dimension");
        Eigen::VectorXd p(r.train.dim());
        for (std::size_t j = 0; j < row.size(); ++j) {
            char* end = nullptr;
            p[static_cast<Eigen::Index>(j)] = std::strtod(row[j].c_str(), &end);
            if (end != row[j].c_str() + row[j].size())
                throw DataError("non-numeric entry in points file: '" + row[j] + "'");
        }
        points.push_back(std::move(p));
    }
    if (points.empty()) throw DataError("points file has no rows");

    const auto order = rank(scorer, points);
    std::vector<std::size_t> position(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = i + 1;

    CsvTable table;
    table.header = {"point_id", "kind", "score", "rank"};
    for (std::size_t i = 0; i < points.size(); ++i) {
        table.add_row({std::to_string(i), cfg.detector, fmt_g12(scorer.score(points[i])),
                       std::to_string(position[i])});
    }
    echo_config(cfg, "score");
    write_csv(fs::path(cfg.out) / "scores.csv", table);
    std::cout << "score: ranked " << points.size() << " points under " << cfg.detector << '\n';
    return 0;
}

int run_experiment(const RunConfig& cfg, const std::string& which) {
    ExperimentReport report;
    if (which == "exp1") {
        report = exp1_original_attack_detectability(cfg.data_dir, cfg.seed);
    } else if (which == "exp2") {
        report = exp2_evasive_attack_detectability(cfg.data_dir, cfg.seed);
    } else if (which == "exp3") {
        report = exp3_threshold_game(cfg.seed, cfg.jobs);
    } else if (which == "exp4") {
        report = exp4_score_vs_strength(cfg.data_dir, cfg.seed);
    } else {
        report = replicate_fig1(cfg.seed);
    }
    echo_config(cfg, which);
    report.write(cfg.out);
    std::cout << which << ": report written to " << cfg.out << '\n';
    return 0;
}

} // namespace

int cli_main(int argc, const char* const* argv) {
    RunConfig cfg;

    // The config file is applied before flag parsing so flags win.
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        try {
            if (arg == "--config" && i + 1 < argc) {
                apply_config_file(cfg, argv[i + 1]);
            } else if (arg.rfind("--config=", 0) == 0) {
                apply_config_file(cfg, arg.substr(9));
            }
        } catch (const DataError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        } catch (const std::invalid_argument& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 1;
        }
    }

    CLI::App app{"poisonlab: poisoning attacks on embedded feature selection, "
                 "outlier-evasion penalties, and detector countermeasures"};
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "flat JSON config file (keys = option names)");
    app.add_option("--dataset", cfg.dataset,
                   "toy | spambase | credit-approval | congressional-voting | path.csv");
    app.add_option("--data-dir", cfg.data_dir, "directory holding the raw UCI files");
    app.add_option("--label-col", cfg.label_col, "label column index for csv datasets");
    app.add_option("--categorical-cols", cfg.categorical_cols,
                   "comma-separated categorical column indices for csv datasets");
    app.add_flag("--csv-header", cfg.csv_header, "csv dataset has a header row");
    app.add_option("--toy-per-class", cfg.toy_per_class, "toy samples per class");
    app.add_option("--train-fraction", cfg.train_fraction, "training split fraction");
    app.add_option("--lambda", cfg.lambda, "regularization strength");
    app.add_option("--reg", cfg.reg, "lasso | ridge | elastic_net");
    app.add_option("--rho", cfg.rho, "elastic-net L1 share");
    app.add_option("--q", cfg.q, "number of attack points");
    app.add_option("--sigma", cfg.sigma, "attack step size");
    app.add_option("--steps", cfg.steps, "attack steps");
    app.add_option("--penalty", cfg.penalty, "none | dt | knn");
    app.add_option("--d-att", cfg.d_att, "attacker distance threshold");
    app.add_option("--phi", cfg.phi, "knn penalty weight");
    app.add_option("--knn-k", cfg.knn_k, "knn penalty neighbor order");
    app.add_option("--power", cfg.power, "knn penalty exponent");
    app.add_option("--detector", cfg.detector, "dt | ocsvm | iforest | lof");
    app.add_option("--d-def", cfg.d_def, "defender distance threshold");
    app.add_option("--nu", cfg.nu, "one-class SVM nu");
    app.add_option("--gamma", cfg.gamma, "RBF gamma (<=0: 1/d)");
    app.add_option("--trees", cfg.trees, "isolation forest tree count");
    app.add_option("--subsample", cfg.subsample, "isolation forest subsample size");
    app.add_option("--lof-k", cfg.lof_k, "LOF neighbor count");
    app.add_option("--seed", cfg.seed, "master seed; all randomness derives from it");
    app.add_option("--out", cfg.out, "output directory");
    app.add_option("--points", cfg.points_file, "points csv for the score subcommand");
    app.add_option("--jobs", cfg.jobs, "trial parallelism for exp3");

    const std::vector<std::string> commands = {"prep", "train", "attack", "score",
                                               "exp1", "exp2", "exp3", "exp4", "fig1"};
    app.add_subcommand("prep", "ingest, normalize and split a dataset");
    app.add_subcommand("train", "fit the learner and print accuracy");
    app.add_subcommand("attack", "run the poisoning attack, write the trace");
    app.add_subcommand("score", "fit a detector and rank a point file");
    app.add_subcommand("exp1", "original-attack detectability on the UCI datasets");
    app.add_subcommand("exp2", "evasive-attack detectability (d_att = 1)");
    app.add_subcommand("exp3", "attacker/defender threshold game on the toy data");
    app.add_subcommand("exp4", "attacker threshold vs. outlier score sweep");
    app.add_subcommand("fig1", "toy trajectory and objective surface");
    app.require_subcommand(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n' << app.help();
        return 1;
    }

    std::string which;
    for (const auto& name : commands) {
        if (app.got_subcommand(name)) {
            which = name;
            break;
        }
    }

    try {
        if (which == "train") return run_train(cfg);
        if (cfg.out.empty())
            throw std::invalid_argument(which + " needs --out");
        if (which == "prep") return run_prep(cfg);
        if (which == "attack") return run_attack(cfg);
        if (which == "score") return run_score(cfg);
        return run_experiment(cfg, which);
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
}

} // namespace poisonlab
