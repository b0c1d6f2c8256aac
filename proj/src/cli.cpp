#include "activelex/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "activelex/engine.hpp"
#include "activelex/error.hpp"
#include "activelex/service.hpp"
#include "activelex/synthetic.hpp"

namespace activelex {

namespace {

/// Raised for bad flag values found after CLI11 has parsed the command line.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  std::string dataset;
  std::string lexicon;
  std::string filter;
  std::size_t rounds = 100;
  std::size_t budget = 100;
  std::size_t warm = 100;
  std::string policy = "oracle";
  unsigned hash_bits = 18;
  std::size_t max_iterations = TrainConfig{}.max_iterations;
  double tolerance = TrainConfig{}.gradient_tolerance;
  std::size_t cv_folds = 3;
  std::optional<double> dev_target;
};

void add_run_flags(CLI::App& cmd, RunOptions& o) {
  cmd.add_option("--dataset", o.dataset, "Dataset file (.jsonl or .csv)")->required()->check(CLI::ExistingFile);
  cmd.add_option("--lexicon", o.lexicon, "Lexicon CSV (word,sentiment)")->check(CLI::ExistingFile);
  cmd.add_option("--filter", o.filter, "Negative filter, one term per line")->check(CLI::ExistingFile);
  cmd.add_option("--rounds", o.rounds, "Active-learning rounds after bootstrap")->capture_default_str();
  cmd.add_option("--budget", o.budget, "Instances labeled per round")->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--warm", o.warm, "Bootstrap sample size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--policy", o.policy, "Simulated annotator: oracle | confidence:<tau>")->capture_default_str();
  cmd.add_option("--hash-bits", o.hash_bits, "log2 of the hashed unigram space")
      ->capture_default_str()
      ->check(CLI::Range(1u, 30u));
  cmd.add_option("--max-iterations", o.max_iterations, "Optimizer iteration cap")->capture_default_str();
  cmd.add_option("--tolerance", o.tolerance, "Gradient infinity-norm tolerance")->capture_default_str();
  cmd.add_option("--cv-folds", o.cv_folds, "Folds for L2 selection")->capture_default_str();
  cmd.add_option("--dev-target", o.dev_target, "Stop once dev micro-F1 reaches this value");
}

struct Inputs {
  std::shared_ptr<const Dataset> dataset;
  Lexicon lexicon;
  NegativeFilter filter;
  SimulationOptions sim;
};

Inputs load_inputs(const RunOptions& o) {
  Inputs in;
  const auto policy = parse_policy(o.policy);
  if (!policy) throw UsageError("invalid --policy \"" + o.policy + "\" (expected oracle or confidence:<tau>)");
  in.dataset = std::make_shared<Dataset>(load_dataset(o.dataset, format_from_path(o.dataset)));
  if (!o.lexicon.empty()) in.lexicon = load_lexicon(o.lexicon);
  if (!o.filter.empty()) in.filter = load_negative_filter(o.filter);
  in.sim.rounds = o.rounds;
  in.sim.budget_k = o.budget;
  in.sim.warm_n = o.warm;
  in.sim.policy = *policy;
  in.sim.dev_target = o.dev_target;
  in.sim.config.hash_dims = std::size_t{1} << o.hash_bits;
  in.sim.config.train.max_iterations = o.max_iterations;
  in.sim.config.train.gradient_tolerance = o.tolerance;
  in.sim.config.cv_folds = o.cv_folds;
  return in;
}

StrategySpec strategy_or_throw(const std::string& name) {
  if (auto s = parse_strategy(name)) return *s;
  std::string valid;
  for (const auto& n : strategy_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw UsageError("unknown strategy \"" + name + "\"; valid strategies: " + valid);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f.flush()) throw DataError("write failed: " + path.string());
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

/// The first round whose fraction_used reaches 0.10, or the last round if none does.
const RoundMetrics& snapshot_round(const std::vector<RoundMetrics>& history) {
  for (const auto& m : history)
    if (m.fraction_used >= 0.10) return m;
  return history.back();
}

std::optional<double> mean(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Active learning for short-text classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // simulate
  RunOptions sim_opts;
  std::string sim_strategy = "entropy-top";
  std::uint64_t sim_seed = 0;
  std::string sim_output = "metrics.csv";
  bool sim_full = false;
  auto* simulate = app.add_subcommand("simulate", "Run one simulated active-learning experiment");
  add_run_flags(*simulate, sim_opts);
  simulate->add_option("--strategy", sim_strategy, "random | entropy-top | entropy-prop | margin-top | margin-prop")
      ->capture_default_str();
  simulate->add_option("--seed", sim_seed, "Experiment seed")->capture_default_str();
  simulate->add_option("--output", sim_output, "Metrics CSV path")->capture_default_str();
  simulate->add_flag("--full", sim_full, "Also train and report the full-data reference model");

  // sweep
  RunOptions sweep_opts;
  std::vector<std::string> sweep_strategies = strategy_names();
  std::vector<std::uint64_t> sweep_seeds{0};
  std::string sweep_dir = "sweep";
  bool sweep_full = false;
  auto* sweep = app.add_subcommand("sweep", "Run every (strategy, seed) pair and summarize");
  add_run_flags(*sweep, sweep_opts);
  sweep->add_option("--strategies", sweep_strategies, "Comma-separated strategy names")->delimiter(',');
  sweep->add_option("--seeds", sweep_seeds, "Comma-separated seeds")->delimiter(',');
  sweep->add_option("--output-dir", sweep_dir, "Directory for per-run CSVs and summary.csv")->capture_default_str();
  sweep->add_flag("--full", sweep_full, "Add a full-data column to the summary");

  // validate
  std::string val_dataset, val_manifest, val_lexicon, val_filter, gen_output;
  bool generate = false;
  SyntheticSpec gen;
  auto* validate = app.add_subcommand("validate", "Check input files, or generate a synthetic corpus");
  validate->add_option("--dataset", val_dataset, "Dataset to check");
  validate->add_option("--manifest", val_manifest, "Expected split sizes (split=count per line)")
      ->check(CLI::ExistingFile);
  validate->add_option("--lexicon", val_lexicon, "Lexicon to check")->check(CLI::ExistingFile);
  validate->add_option("--filter", val_filter, "Negative filter to check")->check(CLI::ExistingFile);
  validate->add_flag("--generate", generate, "Write a seeded synthetic corpus to --output");
  validate->add_option("--output", gen_output, "Output path for --generate (.jsonl or .csv)");
  validate->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  validate->add_option("--classes", gen.classes, "Number of classes")->capture_default_str();
  validate->add_option("--train", gen.train, "Train instances")->capture_default_str();
  validate->add_option("--dev", gen.dev, "Dev instances")->capture_default_str();
  validate->add_option("--test", gen.test, "Test instances")->capture_default_str();
  validate->add_option("--vocab", gen.vocab_per_class, "Vocabulary size per class")->capture_default_str();
  validate->add_option("--overlap", gen.overlap, "Shared fraction of each class vocabulary")->capture_default_str();
  validate->add_option("--subtopics", gen.subtopics, "Subtopic blocks per class vocabulary")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  validate->add_option("--background", gen.background, "Probability a token is uniform noise")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  // serve
  std::string config_path;
  std::optional<std::string> host, data_dir, checkpoint_dir;
  std::optional<int> port;
  auto* serve = app.add_subcommand("serve", "Serve the annotation API over HTTP");
  serve->add_option("--config", config_path, "JSON config file");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--data-dir", data_dir, "Directory holding datasets/, lexicons/, filters/");
  serve->add_option("--checkpoint-dir", checkpoint_dir, "Session checkpoint directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front())
      err << "run '" << app.get_name() << " " << sub->get_name() << " --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) {
      auto strategy = strategy_or_throw(sim_strategy);
      auto in = load_inputs(sim_opts);
      in.sim.seed = sim_seed;
      strategy.k = in.sim.budget_k;
      const auto history = run_simulation(in.dataset, in.lexicon, in.filter, strategy, in.sim);
      write_text(sim_output, metrics_to_csv(history));
      const auto& last = history.back();
      out << "strategy=" << strategy_name(strategy) << " seed=" << sim_seed << " round=" << last.round
          << " n_labeled=" << last.n_labeled << " fraction_used=" << format_double(last.fraction_used)
          << " f1_test=" << opt(last.f1_test) << " f1_remaining=" << opt(last.f1_remaining);
      if (sim_full) {
        const auto full = train_full_data(*in.dataset, in.lexicon, in.filter, sim_seed, in.sim.config);
        out << " full_f1_test=" << opt(full.f1_test);
      }
      out << "\n";
      return kExitOk;
    }

    if (sweep->parsed()) {
      std::erase_if(sweep_strategies, [](const std::string& s) { return s.empty(); });
      if (sweep_strategies.empty()) throw UsageError("--strategies must name at least one strategy");
      if (sweep_seeds.empty()) throw UsageError("--seeds must list at least one seed");
      std::vector<StrategySpec> specs;
      for (const auto& name : sweep_strategies) specs.push_back(strategy_or_throw(name));
      auto in = load_inputs(sweep_opts);
      std::filesystem::create_directories(sweep_dir);

      struct Column {
        std::vector<double> fraction, test, remaining, labeled;
      };
      std::map<std::string, Column> columns;
      std::size_t failures = 0;
      for (auto spec : specs) {
        spec.k = in.sim.budget_k;
        const auto name = strategy_name(spec);
        auto& col = columns[name];
        for (const auto seed : sweep_seeds) {
          try {
            auto options = in.sim;
            options.seed = seed;
            const auto history = run_simulation(in.dataset, in.lexicon, in.filter, spec, options);
            write_text(std::filesystem::path(sweep_dir) / (name + "_seed" + std::to_string(seed) + ".csv"),
                       metrics_to_csv(history));
            const auto& m = snapshot_round(history);
            col.fraction.push_back(m.fraction_used);
            col.labeled.push_back(static_cast<double>(m.n_labeled));
            if (m.f1_test) col.test.push_back(*m.f1_test);
            if (m.f1_remaining) col.remaining.push_back(*m.f1_remaining);
            out << name << " seed " << seed << ": ok\n";
          } catch (const std::exception& e) {
            ++failures;
            err << name << " seed " << seed << ": " << e.what() << "\n";
          }
        }
      }

      std::optional<FullDataResult> full;
      if (sweep_full) full = train_full_data(*in.dataset, in.lexicon, in.filter, sweep_seeds.front(), in.sim.config);

      std::ostringstream table;
      table << "metric";
      for (const auto& name : sweep_strategies) table << "," << strategy_name(strategy_or_throw(name));
      if (full) table << ",full";
      table << "\n";
      auto row = [&](const char* metric, auto pick, std::optional<double> full_value) {
        table << metric;
        for (const auto& name : sweep_strategies) {
          const auto v = mean(pick(columns[strategy_name(strategy_or_throw(name))]));
          table << "," << (v ? format_double(*v) : "");
        }
        if (full) table << "," << (full_value ? format_double(*full_value) : "");
        table << "\n";
      };
      row("fraction_used", [](const Column& c) { return c.fraction; }, 1.0);
      row("n_labeled", [](const Column& c) { return c.labeled; },
          static_cast<double>(in.dataset->split(Split::train).size()));
      row("f1_test", [](const Column& c) { return c.test; }, full ? full->f1_test : std::nullopt);
      row("f1_remaining", [](const Column& c) { return c.remaining; }, std::nullopt);
      write_text(std::filesystem::path(sweep_dir) / "summary.csv", table.str());
      out << table.str();
      if (failures) {
        err << failures << " of " << specs.size() * sweep_seeds.size() << " runs failed\n";
        return kExitRuntime;
      }
      return kExitOk;
    }

    if (validate->parsed()) {
      if (generate) {
        if (gen_output.empty()) throw UsageError("--generate requires --output");
        const auto ds = generate_synthetic(gen);
        write_dataset(ds, gen_output, format_from_path(gen_output));
        out << "wrote " << ds.size() << " instances to " << gen_output << "\n";
        return kExitOk;
      }
      if (val_dataset.empty() && val_lexicon.empty() && val_filter.empty())
        throw UsageError("nothing to validate; pass --dataset, --lexicon, --filter or --generate");
      if (!val_dataset.empty()) {
        if (!std::filesystem::exists(val_dataset)) throw UsageError("dataset not found: " + val_dataset);
        const auto ds = load_dataset(val_dataset, format_from_path(val_dataset));
        out << "dataset " << ds.name << ": " << ds.size() << " instances, labels";
        for (const auto& l : ds.label_set) out << " " << l;
        out << "\n";
        for (const auto& [split, items] : ds.splits) out << "  " << to_string(split) << ": " << items.size() << "\n";
        if (!val_manifest.empty()) {
          // Advisory: a mismatch is reported but is not an error.
          const auto report = validate_manifest(ds, load_manifest(val_manifest));
          out << report.to_string();
          if (!report.all_pass()) err << "warning: split sizes differ from the manifest\n";
        }
      }
      if (!val_lexicon.empty()) {
        const auto lex = load_lexicon(val_lexicon);
        out << "lexicon: " << lex.entries().size() << " entries, categories";
        for (const auto& c : lex.categories()) out << " " << c;
        out << "\n";
      }
      if (!val_filter.empty()) out << "filter: " << load_negative_filter(val_filter).terms().size() << " terms\n";
      return kExitOk;
    }

    if (serve->parsed()) {
      ServiceConfig cfg;
      if (!config_path.empty()) {
        try {
          cfg = load_service_config(config_path);
        } catch (const Error& e) {
          throw UsageError(e.what());
        }
      }
      if (const char* v = std::getenv("ACTIVELEX_DATA_DIR")) cfg.data_dir = v;
      if (const char* v = std::getenv("ACTIVELEX_CHECKPOINT_DIR")) cfg.checkpoint_dir = v;
      if (host) cfg.host = *host;
      if (port) cfg.port = *port;
      if (data_dir) cfg.data_dir = *data_dir;
      if (checkpoint_dir) cfg.checkpoint_dir = *checkpoint_dir;

      Service service(cfg);
      const auto restored = service.restore_checkpoints();
      HttpServer server(service);
      if (!server.bind(cfg.host, cfg.port)) {
        err << "error: cannot listen on " << cfg.host << ":" << cfg.port << "\n";
        return kExitRuntime;
      }
      out << "listening on " << cfg.host << ":" << server.port() << " (" << restored << " sessions restored)"
          << std::endl;
      g_stop = false;
      auto old_int = std::signal(SIGINT, on_signal);
      auto old_term = std::signal(SIGTERM, on_signal);
      std::atomic<bool> done{false};
      std::thread watcher([&] {
        while (!done && !g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        server.stop();
      });
      server.serve();
      done = true;
      watcher.join();
      std::signal(SIGINT, old_int);
      std::signal(SIGTERM, old_term);
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace activelex
