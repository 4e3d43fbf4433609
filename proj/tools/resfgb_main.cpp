// Command-line front end: train, predict, eval.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "resfgb/resfgb.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

struct DataArgs {
  std::string path;
  std::string format = "libsvm";
  std::string label_column = "last";
  int d_hint = 0;
};

void add_data_options(CLI::App* cmd, DataArgs& args) {
  cmd->add_option("--data", args.path, "input data file")->required();
  cmd->add_option("--format", args.format, "input format")
      ->check(CLI::IsMember({"libsvm", "csv"}));
  cmd->add_option("--label-column", args.label_column,
                  "label position for csv input")
      ->check(CLI::IsMember({"last", "first"}));
  cmd->add_option("--d-hint", args.d_hint,
                  "minimum feature count for sparse input")
      ->check(CLI::NonNegativeNumber);
}

resfgb::Dataset load_dataset(const DataArgs& args) {
  std::string text = read_file(args.path);
  if (args.format == "csv")
    return resfgb::parse_csv(text, args.label_column == "last");
  return resfgb::parse_libsvm(text, args.d_hint);
}

int run_train(const DataArgs& data_args, const resfgb::TrainConfig& cfg,
              const std::string& out_path, const std::string& history_path) {
  resfgb::Dataset ds = load_dataset(data_args);
  resfgb::TrainResult res = cfg.mode == resfgb::TrainMode::standard
                                ? resfgb::train(ds, cfg)
                                : resfgb::train_sample_split(ds, cfg);

  resfgb::save_model(res.model, out_path);
  if (!history_path.empty()) {
    if (res.history.empty()) {
      std::fprintf(stderr, "warning: no completed rounds; history not written\n");
    } else {
      std::ofstream os(history_path);
      if (!os) throw std::runtime_error("cannot open " + history_path + " for writing");
      resfgb::emit_history(res.history, os);
    }
  }
  std::printf("final_train_acc=%s final_valid_acc=%s rounds=%d\n",
              resfgb::fmt17(res.final_train_acc).c_str(),
              resfgb::fmt17(res.final_valid_acc).c_str(), res.rounds_completed);
  return 0;
}

int run_predict(const std::string& model_path, DataArgs data_args,
                const std::string& out_path) {
  resfgb::ResFGBModel model = resfgb::load_model(model_path);
  data_args.d_hint = std::max<int>(data_args.d_hint,
                                   static_cast<int>(model.w.rows()));
  resfgb::Dataset ds = load_dataset(data_args);

  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw std::runtime_error("cannot open " + out_path + " for writing");
  }
  std::ostream& os = out_path.empty() ? std::cout : file;
  os << "index,predicted_label\n";
  for (int i = 0; i < ds.n(); ++i) {
    resfgb::Vector x = ds.x.row(i).transpose();
    os << i << ',' << resfgb::predict_label(model, x) << '\n';
  }
  return 0;
}

int run_eval(const std::string& model_path, DataArgs data_args) {
  resfgb::ResFGBModel model = resfgb::load_model(model_path);
  data_args.d_hint = std::max<int>(data_args.d_hint,
                                   static_cast<int>(model.w.rows()));
  resfgb::Dataset ds = load_dataset(data_args);
  resfgb::apply_label_map(ds, model.label_map);

  resfgb::Matrix logits = resfgb::predict_logits(model, ds.x);
  std::printf("accuracy=%s\n",
              resfgb::fmt17(resfgb::accuracy(logits, ds.y)).c_str());
  std::printf("mean_loss=%s\n",
              resfgb::fmt17(resfgb::mean_loss(model.kind, logits, ds.y)).c_str());
  std::printf("grad_norm_l1=%s\n",
              resfgb::fmt17(resfgb::grad_norm_l1(model.kind, logits, ds.y)).c_str());
  std::printf("margin_le_0=%s margin_le_0.5=%s margin_le_1=%s\n",
              resfgb::fmt17(resfgb::margin_fraction(logits, ds.y, 0.0)).c_str(),
              resfgb::fmt17(resfgb::margin_fraction(logits, ds.y, 0.5)).c_str(),
              resfgb::fmt17(resfgb::margin_fraction(logits, ds.y, 1.0)).c_str());

  if (model.kind != resfgb::LossKind::logistic) {
    std::printf("bound diagnostics apply to the logistic loss; skipped\n");
    return 0;
  }
  std::vector<resfgb::BoundReport> reports;
  reports.push_back(resfgb::check_consistency_bound(model, ds));
  reports.push_back(resfgb::check_margin_bound(model, ds, 0.5));
  reports.push_back(resfgb::check_risk_gap_bound(model, ds));
  for (const auto& r : reports) std::printf("%s\n", resfgb::report_line(r).c_str());
  std::printf("bounds=%s\n", resfgb::reports_json(reports).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient-boosted residual-network classifier"};
  app.require_subcommand(1);

  DataArgs train_data, predict_data, eval_data;
  resfgb::TrainConfig cfg;
  std::string loss = "logistic";
  std::string mode = "standard";
  double eta2 = 0.0;
  std::string train_out, history_path;
  std::string predict_model, predict_out, eval_model;

  CLI::App* train_cmd = app.add_subcommand("train", "fit a model");
  add_data_options(train_cmd, train_data);
  train_cmd->add_option("--loss", loss, "loss function")
      ->check(CLI::IsMember({"logistic", "smooth-hinge"}));
  train_cmd->add_option("--layers", cfg.layers, "boosting rounds")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--t0", cfg.t0,
                        "rounds that refit the linear head (negative: all)");
  train_cmd->add_option("--eta", cfg.eta, "step size")
      ->check(CLI::PositiveNumber);
  CLI::Option* eta2_opt =
      train_cmd->add_option("--eta2", eta2, "step size for the second half")
          ->check(CLI::PositiveNumber);
  train_cmd->add_option("--lambda", cfg.lambda, "ridge strength")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--embed-hidden", cfg.embed.hidden,
                        "hidden widths, comma separated")
      ->delimiter(',');
  train_cmd->add_option("--embed-epochs", cfg.embed.epochs,
                        "embedding fit epochs")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--embed-lr", cfg.embed.lr, "embedding learning rate")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--momentum", cfg.embed.momentum, "embedding momentum")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--batch", cfg.embed.batch, "embedding batch size")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--valid-frac", cfg.valid_fraction,
                        "validation fraction")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--patience", cfg.patience,
                        "early-stopping patience (0 disables)");
  train_cmd->add_option("--seed", cfg.seed, "random seed");
  train_cmd->add_option("--mode", mode, "training mode")
      ->check(CLI::IsMember({"standard", "sample-split"}));
  train_cmd->add_flag_function(
      "--no-standardize", [&](std::int64_t) { cfg.standardize = false; },
      "skip feature standardization");
  train_cmd->add_flag_function(
      "--no-project",
      [&](std::int64_t) { cfg.embed.project_unit_ball = false; },
      "skip embedding output projection");
  train_cmd->add_option("--out", train_out, "model output path")->required();
  train_cmd->add_option("--history", history_path, "round history CSV path");

  CLI::App* predict_cmd = app.add_subcommand("predict", "label new samples");
  predict_cmd->add_option("--model", predict_model, "model path")->required();
  add_data_options(predict_cmd, predict_data);
  predict_cmd->add_option("--out", predict_out, "prediction CSV path (default stdout)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "score a labeled set");
  eval_cmd->add_option("--model", eval_model, "model path")->required();
  add_data_options(eval_cmd, eval_data);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed()) {
      cfg.loss = loss == "logistic" ? resfgb::LossKind::logistic
                                    : resfgb::LossKind::smooth_hinge;
      cfg.mode = mode == "standard" ? resfgb::TrainMode::standard
                                    : resfgb::TrainMode::sample_split;
      if (eta2_opt->count() > 0) cfg.eta2 = eta2;
      return run_train(train_data, cfg, train_out, history_path);
    }
    if (predict_cmd->parsed()) return run_predict(predict_model, predict_data, predict_out);
    return run_eval(eval_model, eval_data);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
