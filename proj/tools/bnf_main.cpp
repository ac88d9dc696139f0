// bnf: first-layer strategies for binarized CNNs.
// Subcommands: train, eval, cost, decompose.

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "bnf/container.hpp"
#include "bnf/cost.hpp"
#include "bnf/data.hpp"
#include "bnf/model.hpp"
#include "bnf/net.hpp"
#include "bnf/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string out_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("BNF_OUT_DIR")) return env;
  return "runs";
}

bnf::Shape parse_shape(const std::string& text) {
  std::vector<uint32_t> dims;
  std::string cur;
  for (char c : text + "x") {
    if (c == 'x' || c == 'X') {
      if (cur.empty()) throw UsageError("bad shape: " + text);
      dims.push_back(static_cast<uint32_t>(std::stoul(cur)));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (dims.size() != 3) throw UsageError("shape must be HxWxC, got " + text);
  return bnf::Shape(dims);
}

struct ModelFlags {
  std::string preset_name;
  std::string arch;
  std::string input_shape = "1x16x1";
  std::string axis = "time";
  int classes = 2;
  std::string mode = "baseline";
  int K = 0;
  int M = 8;

  bnf::ModelConfig resolve() const {
    const bnf::FirstLayerMode m = bnf::first_layer_mode_from_string(mode);
    if (m == bnf::FirstLayerMode::Bil && K < 1) throw UsageError("K required for bil");
    if (!preset_name.empty()) {
      return bnf::preset(preset_name, m, m == bnf::FirstLayerMode::Bil ? K : 0, M);
    }
    if (arch.empty()) throw UsageError("either --preset or --arch is required");
    bnf::ModelConfig cfg;
    cfg.layers = bnf::parse_architecture(arch);
    cfg.mode = m;
    cfg.bil_filters = m == bnf::FirstLayerMode::Bil ? K : 0;
    cfg.bit_width = M;
    cfg.input_shape = parse_shape(input_shape);
    if (axis == "time") {
      cfg.axis = bnf::ConvAxisPolicy::TimeOnly;
    } else if (axis == "2d") {
      cfg.axis = bnf::ConvAxisPolicy::Full2d;
    } else {
      throw UsageError("axis must be 'time' or '2d'");
    }
    cfg.num_classes = classes;
    cfg.validate();
    return cfg;
  }
};

json model_to_json(const bnf::ModelConfig& cfg) {
  json j;
  j["arch"] = bnf::render_architecture(cfg.layers);
  j["mode"] = bnf::to_string(cfg.mode);
  j["K"] = cfg.bil_filters;
  j["M"] = cfg.bit_width;
  j["input_shape"] = {cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]};
  j["axis"] = cfg.axis == bnf::ConvAxisPolicy::TimeOnly ? "time" : "2d";
  j["num_classes"] = cfg.num_classes;
  return j;
}

bnf::ModelConfig model_from_json(const json& j) {
  bnf::ModelConfig cfg;
  cfg.layers = bnf::parse_architecture(j.at("arch").get<std::string>());
  cfg.mode = bnf::first_layer_mode_from_string(j.at("mode").get<std::string>());
  cfg.bil_filters = j.at("K").get<int>();
  cfg.bit_width = j.at("M").get<int>();
  const auto dims = j.at("input_shape").get<std::vector<uint32_t>>();
  cfg.input_shape = bnf::Shape(dims);
  cfg.axis = j.at("axis").get<std::string>() == "time" ? bnf::ConvAxisPolicy::TimeOnly
                                                       : bnf::ConvAxisPolicy::Full2d;
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.validate();
  return cfg;
}

struct DataFlags {
  std::string uri;
  std::string csv_map;  // JSON column map, required for csv: URIs
  int window_len = 100;
  int window_stride = 100;
  double lo = 0.0;
  double hi = 1.0;

  bnf::TimeSeriesDataset load(int bit_width, const bnf::Shape* want_shape = nullptr) const {
    if (uri.rfind("synth:", 0) == 0) {
      bnf::SynthSpec spec = bnf::parse_synth_uri(uri);
      spec.bit_width = bit_width;
      // Size generated windows to the model input unless the URI pins them.
      if (want_shape && uri.find("channels=") == std::string::npos &&
          uri.find("width=") == std::string::npos) {
        spec.channels = static_cast<int>((*want_shape)[0]);
        spec.width = static_cast<int>((*want_shape)[1]);
      }
      return bnf::generate_synthetic(spec);
    }
    if (uri.rfind("csv:", 0) == 0) {
      if (csv_map.empty()) throw UsageError("csv data needs --csv-map");
      std::ifstream mf(csv_map);
      if (!mf) throw std::runtime_error("cannot open column map " + csv_map);
      json j;
      mf >> j;
      bnf::CsvColumnMap map;
      map.channel_columns = j.at("channels").get<std::vector<int>>();
      map.label_column = j.at("label").get<int>();
      map.subject_column = j.at("subject").get<int>();
      if (j.contains("delimiter")) {
        const std::string d = j["delimiter"].get<std::string>();
        map.delimiter = d.empty() ? '\0' : d[0];
      }
      const bnf::TimeSeries ts = bnf::load_timeseries_csv(uri.substr(4), map);
      if (ts.dropped_rows > 0) {
        std::cerr << "bnf: dropped " << ts.dropped_rows << " rows with missing values\n";
      }
      return bnf::window(ts, window_len, window_stride, lo, hi, bit_width);
    }
    throw UsageError("data must be synth:<kind> or csv:<path>, got " + uri);
  }
};

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << contents;
}

int cmd_train(const ModelFlags& mf, const DataFlags& data, const DataFlags& val_data,
              bnf::TrainConfig tc, const bnf::BuildOptions& base_opt, bool loso,
              const std::string& out_flag, const std::string& run_name) {
  const auto t0 = std::chrono::steady_clock::now();
  const bnf::ModelConfig cfg = mf.resolve();
  const std::string run_dir = out_root(out_flag) + "/" + run_name;
  fs::create_directories(run_dir);

  const bnf::TimeSeriesDataset train_set = data.load(cfg.bit_width, &cfg.input_shape);
  bnf::TimeSeriesDataset val_set;
  if (!val_data.uri.empty()) val_set = val_data.load(cfg.bit_width, &cfg.input_shape);

  bnf::BuildOptions opt = base_opt;
  opt.seed = tc.seed;

  json manifest;
  manifest["format"] = "bnf-run-manifest-v1";
  manifest["version"] = kVersion;
  manifest["command"] = "train";
  manifest["model"] = model_to_json(cfg);
  manifest["data"] = data.uri;
  manifest["val_data"] = val_data.uri;
  manifest["seed"] = tc.seed;
  manifest["epochs"] = tc.epochs;
  manifest["initial_lr"] = tc.initial_lr;
  json sched = json::array();
  for (const auto& [e, m] : tc.lr_schedule) sched.push_back({{"epoch", e}, {"mult", m}});
  manifest["lr_schedule"] = sched;
  manifest["batch_size"] = tc.batch_size;
  manifest["binarize_hidden"] = opt.binarize_hidden;
  manifest["quantize_activations"] = opt.quantize_activations;
  manifest["dropout_rate"] = opt.dropout_rate;
  manifest["loso"] = loso;
  manifest["metrics_csv"] = "metrics.csv";
  manifest["checkpoint_dir"] = "checkpoint";

  if (loso) {
    const std::vector<int> subjects = train_set.subject_ids();
    const bnf::FoldPlan plan = bnf::loso_split(train_set, subjects);
    json folds = json::array();
    double err_sum = 0.0;
    for (size_t i = 0; i < plan.subjects.size(); ++i) {
      const int held = plan.subjects[i];
      const auto [tr, va] = bnf::loso_fold(train_set, held);
      bnf::Network net = bnf::build_network(cfg, opt);
      std::ofstream metrics(run_dir + "/metrics_fold" + std::to_string(held) + ".csv");
      const bnf::TrainResult r = bnf::train(net, tr, va, cfg.mode, tc, &metrics);
      err_sum += r.final_val_err_pct;
      folds.push_back({{"held_out", held},
                       {"final_val_err_pct", r.final_val_err_pct},
                       {"best_val_err_pct", r.best_val_err_pct},
                       {"best_epoch", r.best_epoch}});
      std::cout << "fold " << held << ": final val err " << r.final_val_err_pct << "%\n";
    }
    const double mean_err = err_sum / static_cast<double>(plan.subjects.size());
    manifest["folds"] = folds;
    manifest["mean_val_err_pct"] = mean_err;
    std::cout << "loso mean val err: " << mean_err << "%\n";
  } else {
    bnf::Network net = bnf::build_network(cfg, opt);
    std::ofstream metrics(run_dir + "/metrics.csv");
    const bnf::TrainResult r =
        bnf::train(net, train_set, val_set, cfg.mode, tc, &metrics);
    bnf::save_network_tensors(run_dir + "/checkpoint", net);
    manifest["final_val_err_pct"] = r.final_val_err_pct;
    manifest["best_val_err_pct"] = r.best_val_err_pct;
    manifest["best_epoch"] = r.best_epoch;
    std::cout << "final val err: " << r.final_val_err_pct << "%\n";
    std::cout << "best val err:  " << r.best_val_err_pct << "% (epoch " << r.best_epoch << ")\n";
  }

  manifest["wall_clock_sec"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text_file(run_dir + "/manifest.json", manifest.dump(2) + "\n");
  std::cout << "run dir: " << run_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& run_dir, const DataFlags& data) {
  std::ifstream mf(run_dir + "/manifest.json");
  if (!mf) throw std::runtime_error("cannot open " + run_dir + "/manifest.json");
  json manifest;
  mf >> manifest;
  const bnf::ModelConfig cfg = model_from_json(manifest.at("model"));

  bnf::BuildOptions opt;
  opt.binarize_hidden = manifest.at("binarize_hidden").get<bool>();
  opt.quantize_activations = manifest.at("quantize_activations").get<bool>();
  opt.dropout_rate = manifest.at("dropout_rate").get<double>();
  opt.seed = manifest.at("seed").get<uint64_t>();
  bnf::Network net = bnf::build_network(cfg, opt);
  bnf::load_network_tensors(
      run_dir + "/" + manifest.at("checkpoint_dir").get<std::string>(), net);

  const bnf::TimeSeriesDataset ds = data.load(cfg.bit_width, &cfg.input_shape);
  if (ds.samples.empty()) throw std::runtime_error("eval: empty dataset");
  const bnf::EvalResult r = bnf::evaluate(net, ds, cfg.mode, 64);
  std::cout << "error_pct: " << r.error_pct << "\n";
  std::cout << "loss: " << r.loss << "\n";
  return 0;
}

int cmd_cost(const ModelFlags& mf, uint64_t H, uint64_t W, uint64_t C, uint64_t F,
             uint64_t F_elems, uint64_t I, double gates_float, const std::string& csv_out) {
  bnf::FirstLayerDims d;
  if (!mf.preset_name.empty()) {
    bnf::ModelConfig cfg =
        bnf::preset(mf.preset_name, bnf::FirstLayerMode::Bil, mf.K > 0 ? mf.K : 64, mf.M);
    d = bnf::first_layer_dims(cfg);
  } else {
    if (H == 0 || W == 0 || C == 0 || I == 0 || (F == 0 && F_elems == 0)) {
      throw UsageError("cost needs --preset or all of --H --W --C --F --I (with --M, --K)");
    }
    d.H = H;
    d.W = W;
    d.C = C;
    d.M = static_cast<uint64_t>(mf.M);
    d.F_elems = F_elems > 0 ? F_elems : F * F;
    d.I = I;
    d.K = static_cast<uint64_t>(mf.K);
  }
  bnf::GateCostTable gates = bnf::GateCostTable::defaults(d.M);
  if (gates_float > 0.0) gates.float_mult = gates_float;
  const auto reports = bnf::cost_table(d, gates);
  std::cout << bnf::format_cost_table_text(reports);
  if (!csv_out.empty()) write_text_file(csv_out, bnf::format_cost_table_csv(reports));
  return 0;
}

int cmd_decompose(const std::string& input, const std::string& output, int m_flag,
                  bool roundtrip) {
  const bnf::ContainerTensor ct = bnf::read_container(input);
  const bnf::FixedTensor* fixed = std::get_if<bnf::FixedTensor>(&ct);
  if (!fixed) {
    throw std::runtime_error("decompose: " + input + " is not a fixed-point tensor container");
  }
  if (m_flag > 0 && m_flag != fixed->bit_width()) {
    throw std::runtime_error("decompose: --M " + std::to_string(m_flag) +
                             " does not match file bit width " +
                             std::to_string(fixed->bit_width()));
  }
  const bnf::BitPlaneTensor planes = bnf::decompose(*fixed);
  if (!output.empty()) bnf::write_container(output, planes);
  std::cout << "planes: " << planes.plane_count() << " (C=" << fixed->shape()[2]
            << " x M=" << fixed->bit_width() << ")\n";
  if (roundtrip) {
    const bool ok = bnf::recompose(planes) == *fixed;
    std::cout << "roundtrip: " << (ok ? "PASS" : "FAIL") << "\n";
    if (!ok) return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bnf: binarized-CNN first-layer strategies (baseline, fpid, dbi, bil)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  ModelFlags mf;
  DataFlags data, val_data;
  bnf::TrainConfig tc;
  bnf::BuildOptions opt;
  bool loso = false;
  std::string out_flag, run_name = "run";
  std::vector<std::string> lr_steps;

  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--preset", mf.preset_name, "pamap2, svhn or cifar10");
    cmd->add_option("--arch", mf.arch, "architecture string, e.g. 24-C3+MP2+FC256+Softmax");
    cmd->add_option("--input", mf.input_shape, "input shape HxWxC (with --arch)");
    cmd->add_option("--axis", mf.axis, "conv/pool axis policy: time or 2d");
    cmd->add_option("--classes", mf.classes, "class count (with --arch)");
    cmd->add_option("--mode", mf.mode, "first layer: baseline, fpid, dbi or bil");
    cmd->add_option("--K", mf.K, "BIL filter count");
    cmd->add_option("--M", mf.M, "input bit width");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  add_model_flags(train_cmd);
  train_cmd->add_option("--data", data.uri, "synth:<kind>[?opts] or csv:<path>")->required();
  train_cmd->add_option("--val-data", val_data.uri, "held-out set (defaults to train data)");
  train_cmd->add_option("--csv-map", data.csv_map, "JSON column map for csv data");
  train_cmd->add_option("--window", data.window_len, "window length (csv data)");
  train_cmd->add_option("--stride", data.window_stride, "window stride (csv data)");
  train_cmd->add_option("--lo", data.lo, "fixed-point range low (csv data)");
  train_cmd->add_option("--hi", data.hi, "fixed-point range high (csv data)");
  train_cmd->add_option("--epochs", tc.epochs, "training epochs");
  train_cmd->add_option("--lr", tc.initial_lr, "initial learning rate");
  train_cmd->add_option("--lr-step", lr_steps, "schedule entry epoch:multiplier (repeatable)");
  train_cmd->add_option("--batch", tc.batch_size, "batch size");
  train_cmd->add_option("--seed", tc.seed, "run seed");
  train_cmd->add_flag("--loso", loso, "leave-one-subject-out over all subjects");
  train_cmd->add_option("--dropout", opt.dropout_rate, "dropout rate before the first FC");
  bool no_bin = false, no_quant = false;
  train_cmd->add_flag("--no-binarize-hidden", no_bin, "keep hidden weights at full precision");
  train_cmd->add_flag("--no-quantize-activations", no_quant, "skip 1-bit activations");
  train_cmd->add_option("--out", out_flag, "output root (default $BNF_OUT_DIR or ./runs)");
  train_cmd->add_option("--run-name", run_name, "run directory name");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_run;
  eval_cmd->add_option("--run", eval_run, "run directory with manifest.json")->required();
  eval_cmd->add_option("--data", val_data.uri, "dataset to score")->required();
  eval_cmd->add_option("--csv-map", val_data.csv_map, "JSON column map for csv data");
  eval_cmd->add_option("--window", val_data.window_len, "window length (csv data)");
  eval_cmd->add_option("--stride", val_data.window_stride, "window stride (csv data)");
  eval_cmd->add_option("--lo", val_data.lo, "fixed-point range low (csv data)");
  eval_cmd->add_option("--hi", val_data.hi, "fixed-point range high (csv data)");

  CLI::App* cost_cmd = app.add_subcommand("cost", "first-layer cost table");
  add_model_flags(cost_cmd);
  uint64_t H = 0, W = 0, C = 0, F = 0, F_elems = 0, I = 0;
  double gates_float = 0.0;
  std::string cost_csv;
  cost_cmd->add_option("--H", H, "input height");
  cost_cmd->add_option("--W", W, "input width");
  cost_cmd->add_option("--C", C, "input channels");
  cost_cmd->add_option("--F", F, "square kernel side (elements F*F)");
  cost_cmd->add_option("--F-elems", F_elems, "kernel element count override (e.g. 3 for 1x3)");
  cost_cmd->add_option("--I", I, "first-layer filter count");
  cost_cmd->add_option("--gates-float", gates_float, "gate cost of one float multiply");
  cost_cmd->add_option("--csv", cost_csv, "also write the table as CSV");

  CLI::App* dec_cmd = app.add_subcommand("decompose", "bit-plane decompose a tensor file");
  std::string dec_in, dec_out;
  int dec_m = 0;
  bool dec_roundtrip = false;
  dec_cmd->add_option("--input", dec_in, "fixed-point tensor container")->required();
  dec_cmd->add_option("--output", dec_out, "bit-plane container to write");
  dec_cmd->add_option("--M", dec_m, "expected bit width (checked against the file)");
  dec_cmd->add_flag("--roundtrip", dec_roundtrip, "verify recompose(decompose(x)) == x");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (const std::string& s : lr_steps) {
      const size_t colon = s.find(':');
      if (colon == std::string::npos) throw UsageError("bad --lr-step, want epoch:mult");
      tc.lr_schedule.emplace_back(std::stoi(s.substr(0, colon)), std::stod(s.substr(colon + 1)));
    }
    if (!lr_steps.empty()) {
      // replace the default breakpoints rather than appending to them
      tc.lr_schedule.erase(tc.lr_schedule.begin(), tc.lr_schedule.begin() + 2);
    }
    opt.binarize_hidden = !no_bin;
    opt.quantize_activations = !no_quant;

    if (train_cmd->parsed()) {
      return cmd_train(mf, data, val_data, tc, opt, loso, out_flag, run_name);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_run, val_data);
    if (cost_cmd->parsed()) {
      return cmd_cost(mf, H, W, C, F, F_elems, I, gates_float, cost_csv);
    }
    if (dec_cmd->parsed()) return cmd_decompose(dec_in, dec_out, dec_m, dec_roundtrip);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const bnf::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
