#include "vrae/cli.hpp"

#include "vrae/analysis.hpp"
#include "vrae/checkpoint.hpp"
#include "vrae/data.hpp"
#include "vrae/init.hpp"
#include "vrae/json_io.hpp"
#include "vrae/metrics.hpp"
#include "vrae/parallel.hpp"
#include "vrae/rng.hpp"
#include "vrae/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace vrae::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kProbeImages = 16;

// Runtime failures that should name a path.
struct FileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw FileError(std::string(what) + " not found: " + p.string());
}

void require_dir(const fs::path& p, const char* what) {
  if (!fs::is_directory(p)) throw FileError(std::string(what) + " not found: " + p.string());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FileError("cannot write " + path.string());
  f << text;
  if (!f) throw FileError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_run_json(const fs::path& path, const std::string& command, Json settings) {
  Json j;
  j["command"] = command;
  j["settings"] = std::move(settings);
  write_text(path, j.dump(2) + "\n");
}

// Sibling "<file>.run.json" for commands whose output is a single file.
fs::path run_json_for(const fs::path& output) { return fs::path(output.string() + ".run.json"); }

Json to_ordered(const nlohmann::json& j) { return Json::parse(j.dump()); }

void apply_threads(int threads) {
  if (threads > 0) set_num_threads(threads);
}

data::DatasetManifest load_manifest(const fs::path& data_dir) {
  require_dir(data_dir, "data directory");
  const fs::path file = data_dir / "manifest.csv";
  require_file(file, "manifest");
  auto m = data::DatasetManifest::load(file);
  for (auto& r : m.records) {
    fs::path p(r.path);
    if (p.is_relative()) r.path = (data_dir / p).string();
  }
  return m;
}

Json entropy_settings() { return {{"bins", analysis::kEntropyBins}, {"log_base", "e"}, {"range", "per-tensor min/max"}}; }

Json ssim_settings() {
  const metrics::SsimOptions o;
  return {{"window", o.window}, {"sigma", o.sigma}, {"k1", o.k1}, {"k2", o.k2}, {"padding", "valid"}};
}

// ---------------------------------------------------------------------------

struct PrepareArgs {
  std::string input, out;
  std::uint64_t seed = 0;
  std::optional<std::size_t> augment_to;
};

void cmd_prepare(const PrepareArgs& a, std::ostream& out, std::ostream& err) {
  require_dir(a.input, "input directory");
  std::vector<std::string> usable;
  for (const auto& p : data::list_images(a.input)) {
    try {
      data::load_image(p, 8);
      usable.push_back(fs::absolute(p).lexically_normal().string());
    } catch (const data::ImageError& e) {
      err << "warning: skipping " << p.string() << ": " << e.what() << "\n";
    }
  }
  if (usable.empty()) throw FileError("no decodable images in " + a.input);
  const auto manifest = data::split_and_augment(usable, a.seed, a.augment_to);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  manifest.save(dir / "manifest.csv");
  const auto n_train = manifest.of(data::Split::train).size();
  const auto n_val = manifest.of(data::Split::val).size();
  const auto n_test = manifest.of(data::Split::test).size();
  Json s{{"input", a.input},          {"out", a.out},         {"seed", a.seed},
         {"augment_to", nullptr},     {"source_images", usable.size()},
         {"train", n_train},          {"val", n_val},         {"test", n_test},
         {"split", "70/15/15 floor"}, {"max_rotation_deg", data::kMaxRotationDeg}};
  if (a.augment_to) s["augment_to"] = *a.augment_to;
  write_run_json(dir / "run.json", "prepare", s);
  out << "prepared " << usable.size() << " images: train " << n_train << ", val " << n_val << ", test " << n_test
      << " -> " << (dir / "manifest.csv").string() << "\n";
}

struct DegradeArgs {
  std::string in, out, noise = "literal";
  int pool_iters = 10;
  std::uint64_t seed = 0;
};

void cmd_degrade(const DegradeArgs& a, std::ostream& out, std::ostream& err) {
  require_dir(a.in, "input directory");
  data::DegradationConfig cfg;
  cfg.noise = data::parse_noise_mode(a.noise);
  cfg.pool_iterations = a.pool_iters;
  cfg.seed = a.seed;
  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::size_t written = 0;
  for (const auto& p : data::list_images(a.in)) {
    Tensor4 img;
    try {
      img = data::load_image(p, 0);
    } catch (const data::ImageError& e) {
      err << "warning: skipping " << p.string() << ": " << e.what() << "\n";
      continue;
    }
    data::save_png(dir / (p.stem().string() + ".png"), data::degrade(img, cfg, p.filename().string()));
    ++written;
  }
  if (written == 0) throw FileError("no decodable images in " + a.in);
  write_run_json(dir / "run.json", "degrade",
                 {{"in", a.in}, {"out", a.out}, {"images", written}, {"degradation", to_ordered(to_json(cfg))}});
  out << "degraded " << written << " images -> " << dir.string() << "\n";
}

struct TrainArgs {
  std::string arch = "vrae", data, out, noise = "literal", loss_log;
  int depth = 3, epochs = 100, eval_every = 1, pool_iters = 10, threads = 0;
  std::size_t batch = 16, image_size = 256, width_div = 1;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

void cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  apply_threads(a.threads);
  TrainConfig cfg;
  cfg.model = VraeConfig::reduced(parse_arch(a.arch), a.depth, a.image_size, a.width_div);
  cfg.model.validate();
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.lr = a.lr;
  cfg.seed = a.seed;
  cfg.eval_every = a.eval_every;
  cfg.checkpoint_path = a.out;
  cfg.degradation.noise = data::parse_noise_mode(a.noise);
  cfg.degradation.pool_iterations = a.pool_iters;
  cfg.degradation.seed = a.seed;
  const fs::path loss_log = a.loss_log.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.loss_log);

  const auto manifest = load_manifest(a.data);
  data::ManifestDataset train_set(manifest, data::Split::train, a.image_size, cfg.degradation);
  data::ManifestDataset val_set(manifest, data::Split::val, a.image_size, cfg.degradation);
  if (train_set.size() == 0) throw FileError("manifest has no training records: " + a.data);

  std::vector<EpochLog> epochs;
  if (a.epochs == 0) {
    // Untrained network, useful as a baseline row.
    auto net = Network::build(cfg.model, cfg.seed);
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    Checkpoint::capture(net, nullptr, cfg.seed, cfg.degradation).save(a.out);
  } else {
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    const auto result = train(cfg, train_set, val_set.size() > 0 ? &val_set : nullptr);
    epochs = result.epochs;
    for (const auto& e : epochs) {
      err << "epoch " << e.epoch << " train_mse " << e.train_mse;
      if (e.val_mse) err << " val_mse " << *e.val_mse;
      err << "\n";
    }
  }
  write_text(loss_log, loss_log_csv(epochs));
  Json s{{"arch", a.arch},
         {"depth", a.depth},
         {"epochs", a.epochs},
         {"batch", a.batch},
         {"lr", a.lr},
         {"seed", a.seed},
         {"data", a.data},
         {"out", a.out},
         {"best_out", a.out + ".best"},
         {"loss_log", loss_log.string()},
         {"image_size", a.image_size},
         {"width_div", a.width_div},
         {"eval_every", a.eval_every},
         {"threads", num_threads()},
         {"train_records", train_set.size()},
         {"val_records", val_set.size()},
         {"model", to_ordered(to_json(cfg.model))},
         {"degradation", to_ordered(to_json(cfg.degradation))},
         {"adam", to_ordered(to_json(AdamHyperparams{}))}};
  s["adam"]["lr"] = a.lr;
  write_run_json(run_json_for(a.out), "train", s);
  out << "trained " << cfg.model.label() << " for " << a.epochs << " epochs -> " << a.out << "\n";
}

struct EvalArgs {
  std::string ckpt, data, report, label, split = "test";
  int fps_iters = 100, fps_warmup = 10, threads = 0;
  bool append = false;
};

void cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  apply_threads(a.threads);
  require_file(a.ckpt, "checkpoint");
  const auto ckpt = Checkpoint::load(a.ckpt);
  auto net = ckpt.restore();
  const auto manifest = load_manifest(a.data);
  const auto split = data::parse_split(a.split);
  data::ManifestDataset ds(manifest, split, ckpt.config.input_h, ckpt.degradation);
  if (ds.size() == 0) throw FileError("manifest has no " + a.split + " records: " + a.data);
  const std::string label = a.label.empty() ? ckpt.config.label() : a.label;
  const auto report = metrics::evaluate(net, ds, label, {a.fps_warmup, a.fps_iters, ckpt.seed}, err);

  std::string text;
  const fs::path path(a.report);
  if (a.append && fs::is_regular_file(path)) {
    text = read_text(path);
    if (!text.starts_with(metrics::report_csv_header())) {
      throw FileError("cannot append: unexpected header in " + path.string());
    }
  } else {
    text = metrics::report_csv_header();
  }
  text += metrics::report_csv_row(report);
  write_text(path, text);
  write_run_json(run_json_for(path), "eval",
                 {{"ckpt", a.ckpt},
                  {"data", a.data},
                  {"report", a.report},
                  {"split", a.split},
                  {"label", label},
                  {"append", a.append},
                  {"images", report.images},
                  {"psnr_capped", report.psnr_capped},
                  {"nmse_excluded", report.nmse_excluded},
                  {"psnr_sentinel_db", metrics::kPsnrSentinelDb},
                  {"prediction_clamp", "[0,1]"},
                  {"ssim", ssim_settings()},
                  {"fps_iters", a.fps_iters},
                  {"fps_warmup", a.fps_warmup},
                  {"threads", report.threads},
                  {"model", to_ordered(to_json(ckpt.config))},
                  {"degradation", to_ordered(to_json(ckpt.degradation))}});
  out << metrics::report_csv_header() << metrics::report_csv_row(report);
}

struct BenchArgs {
  std::string ckpt, out;
  int iters = 100, warmup = 10, threads = 0;
};

void cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream&) {
  apply_threads(a.threads);
  require_file(a.ckpt, "checkpoint");
  const auto ckpt = Checkpoint::load(a.ckpt);
  auto net = ckpt.restore();
  const auto r = metrics::measure_fps(net, {a.warmup, a.iters, ckpt.seed});
  const fs::path path = a.out.empty() ? fs::path(a.ckpt + ".bench.json") : fs::path(a.out);
  write_run_json(path, "bench",
                 {{"ckpt", a.ckpt},
                  {"model", ckpt.config.label()},
                  {"input", {1, ckpt.config.input_channels, ckpt.config.input_h, ckpt.config.input_w}},
                  {"iters", r.iters},
                  {"warmup", a.warmup},
                  {"threads", r.threads},
                  {"hardware", metrics::hardware_string()},
                  {"median_seconds", r.median_seconds},
                  {"fps", r.fps}});
  char line[160];
  std::snprintf(line, sizeof line, "%s fps %.3f median %.6f s over %d iters, %d threads\n",
                ckpt.config.label().c_str(), r.fps, r.median_seconds, r.iters, r.threads);
  out << line;
}

struct EntropyArgs {
  std::string ckpt_a, ckpt_b, data, out, svg, split = "test";
  std::size_t probe = kProbeImages;
  std::uint64_t seed = 0;
  int threads = 0;
  bool no_timestamp = false;
};

void cmd_entropy(const EntropyArgs& a, std::ostream& out, std::ostream&) {
  apply_threads(a.threads);
  require_file(a.ckpt_a, "checkpoint");
  require_file(a.ckpt_b, "checkpoint");
  const auto ca = Checkpoint::load(a.ckpt_a);
  const auto cb = Checkpoint::load(a.ckpt_b);
  if (ca.config.input_h != cb.config.input_h || ca.config.input_w != cb.config.input_w) {
    throw std::runtime_error("checkpoints expect different input sizes: " + a.ckpt_a + ", " + a.ckpt_b);
  }
  const auto manifest = load_manifest(a.data);
  data::ManifestDataset ds(manifest, data::parse_split(a.split), ca.config.input_h, ca.degradation);
  if (ds.size() == 0) throw FileError("manifest has no " + a.split + " records: " + a.data);
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Stream(derive_seed(a.seed, "probe")).shuffle(order);
  order.resize(std::min(a.probe, order.size()));
  const auto probe = assemble_batch(ds, order).degraded;
  Json ids = Json::array();
  for (auto i : order) ids.push_back(data::record_id(ds.record(i)));

  auto na = ca.restore();
  auto nb = cb.restore();
  std::vector<analysis::EntropyProfile> profiles{analysis::entropy_profile(na, probe, ca.config.label()),
                                                 analysis::entropy_profile(nb, probe, cb.config.label())};
  write_text(a.out, analysis::entropy_csv(profiles));
  if (!a.svg.empty()) write_text(a.svg, analysis::entropy_svg(profiles, !a.no_timestamp));
  write_run_json(run_json_for(a.out), "entropy",
                 {{"ckpt_a", a.ckpt_a},
                  {"ckpt_b", a.ckpt_b},
                  {"data", a.data},
                  {"split", a.split},
                  {"out", a.out},
                  {"svg", a.svg},
                  {"seed", a.seed},
                  {"probe_images", order.size()},
                  {"probe_ids", ids},
                  {"probe_input", "degraded"},
                  {"granularity", "every main-encoder convolution, averaged per block (1 = stem)"},
                  {"entropy", entropy_settings()},
                  {"threads", num_threads()}});
  out << analysis::entropy_csv(profiles);
}

struct ParetoArgs {
  std::string metrics, x = "fps", y = "psnr", out, svg;
  bool no_timestamp = false;
};

void cmd_pareto(const ParetoArgs& a, std::ostream& out, std::ostream&) {
  require_file(a.metrics, "metrics CSV");
  const auto rows = metrics::read_report_csv(read_text(a.metrics));
  const auto metric = analysis::parse_quality_metric(a.y);
  std::vector<analysis::ParetoPoint> pts;
  for (const auto& r : rows) {
    const double q = metric == analysis::QualityMetric::psnr   ? r.psnr_db
                     : metric == analysis::QualityMetric::ssim ? r.ssim
                                                               : r.nmse;
    pts.push_back({r.model, q, r.fps, r.params});
  }
  const auto front = analysis::pareto_front(pts, analysis::maximize(metric));
  write_text(a.out, analysis::pareto_csv(pts, metric, front));
  if (!a.svg.empty()) write_text(a.svg, analysis::pareto_svg(pts, metric, front, !a.no_timestamp));
  Json names = Json::array();
  for (auto i : front) names.push_back(pts[i].model);
  write_run_json(run_json_for(a.out), "pareto",
                 {{"metrics", a.metrics},
                  {"x", a.x},
                  {"y", a.y},
                  {"orientation", analysis::maximize(metric) ? "maximize" : "minimize"},
                  {"out", a.out},
                  {"svg", a.svg},
                  {"points", pts.size()},
                  {"front", names}});
  out << "front:";
  for (auto i : front) out << " " << pts[i].model;
  out << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vertical residual autoencoder for plate denoising"};
  app.name("vrae");
  app.require_subcommand(1);

  const std::vector<std::string> noise_modes{"literal", "zero-mean", "zero_mean", "off"};

  PrepareArgs pa;
  auto* prepare = app.add_subcommand("prepare", "Split a folder of images and plan augmentation");
  prepare->add_option("--input", pa.input, "Folder of PNG/JPEG images")->required();
  prepare->add_option("--out", pa.out, "Output folder for manifest.csv")->required();
  prepare->add_option("--seed", pa.seed, "Split and augmentation seed");
  prepare->add_option("--augment-to", pa.augment_to, "Grow the training split to this many records");

  DegradeArgs da;
  auto* degrade = app.add_subcommand("degrade", "Write degraded copies of a folder of images");
  degrade->add_option("--in", da.in, "Input folder")->required();
  degrade->add_option("--out", da.out, "Output folder")->required();
  degrade->add_option("--noise", da.noise, "literal | zero-mean | off")->check(CLI::IsMember(noise_modes));
  degrade->add_option("--pool-iters", da.pool_iters, "Average-pool passes")->check(CLI::Range(0, 1000));
  degrade->add_option("--seed", da.seed, "Noise seed");

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train a model on a prepared dataset");
  trainc->add_option("--arch", ta.arch, "vrae | ae")->check(CLI::IsMember({"vrae", "ae"}));
  trainc->add_option("--depth", ta.depth, "Encoder depth 2..5")->check(CLI::Range(2, 5));
  trainc->add_option("--epochs", ta.epochs, "Epochs (0 writes the initialised network)")->check(CLI::Range(0, 1000000));
  trainc->add_option("--batch", ta.batch, "Batch size")->check(CLI::Range(1, 65536));
  trainc->add_option("--lr", ta.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  trainc->add_option("--seed", ta.seed, "Init, shuffle and degradation seed");
  trainc->add_option("--data", ta.data, "Folder written by prepare")->required();
  trainc->add_option("--out", ta.out, "Checkpoint path")->required();
  trainc->add_option("--image-size", ta.image_size, "Square input size")->check(CLI::Range(16, 4096));
  trainc->add_option("--width-div", ta.width_div, "Divide every stage width")->check(CLI::Range(1, 512));
  trainc->add_option("--noise", ta.noise, "literal | zero-mean | off")->check(CLI::IsMember(noise_modes));
  trainc->add_option("--pool-iters", ta.pool_iters, "Average-pool passes")->check(CLI::Range(0, 1000));
  trainc->add_option("--eval-every", ta.eval_every, "Validate every N epochs")->check(CLI::Range(1, 1000000));
  trainc->add_option("--threads", ta.threads, "Worker threads (default VRAE_THREADS or 1)")->check(CLI::Range(1, 1024));
  trainc->add_option("--loss-log", ta.loss_log, "Per-epoch loss CSV (default <out>.loss.csv)");

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "Score a checkpoint on the test split");
  evalc->add_option("--ckpt", ea.ckpt, "Checkpoint")->required();
  evalc->add_option("--data", ea.data, "Folder written by prepare")->required();
  evalc->add_option("--report", ea.report, "Metrics CSV")->required();
  evalc->add_option("--split", ea.split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
  evalc->add_option("--label", ea.label, "Model name in the report (default from the checkpoint)");
  evalc->add_flag("--append", ea.append, "Append a row to an existing report");
  evalc->add_option("--fps-iters", ea.fps_iters, "Timed forwards (0 skips timing)")->check(CLI::Range(0, 1000000));
  evalc->add_option("--fps-warmup", ea.fps_warmup, "Untimed forwards")->check(CLI::Range(0, 1000000));
  evalc->add_option("--threads", ea.threads, "Worker threads")->check(CLI::Range(1, 1024));

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Time single-image inference");
  bench->add_option("--ckpt", ba.ckpt, "Checkpoint")->required();
  bench->add_option("--iters", ba.iters, "Timed forwards")->check(CLI::Range(1, 1000000));
  bench->add_option("--warmup", ba.warmup, "Untimed forwards")->check(CLI::Range(0, 1000000));
  bench->add_option("--threads", ba.threads, "Worker threads")->check(CLI::Range(1, 1024));
  bench->add_option("--out", ba.out, "Result JSON (default <ckpt>.bench.json)");

  EntropyArgs na;
  auto* entropy = app.add_subcommand("entropy", "Per-block entropy change of two checkpoints");
  entropy->add_option("--ckpt-a", na.ckpt_a, "First checkpoint")->required();
  entropy->add_option("--ckpt-b", na.ckpt_b, "Second checkpoint")->required();
  entropy->add_option("--data", na.data, "Folder written by prepare")->required();
  entropy->add_option("--out", na.out, "Entropy CSV")->required();
  entropy->add_option("--svg", na.svg, "Optional chart");
  entropy->add_flag("--no-timestamp", na.no_timestamp, "Omit the SVG timestamp comment");
  entropy->add_option("--split", na.split, "Probe split")->check(CLI::IsMember({"train", "val", "test"}));
  entropy->add_option("--probe", na.probe, "Probe images")->check(CLI::Range(1, 100000));
  entropy->add_option("--seed", na.seed, "Probe selection seed");
  entropy->add_option("--threads", na.threads, "Worker threads")->check(CLI::Range(1, 1024));

  ParetoArgs pr;
  auto* pareto = app.add_subcommand("pareto", "Quality vs fps Pareto front of a metrics CSV");
  pareto->add_option("--metrics", pr.metrics, "Metrics CSV")->required();
  pareto->add_option("--x", pr.x, "fps")->check(CLI::IsMember({"fps"}));
  pareto->add_option("--y", pr.y, "psnr | ssim | nmse")->check(CLI::IsMember({"psnr", "ssim", "nmse"}));
  pareto->add_option("--out", pr.out, "Pareto CSV")->required();
  pareto->add_option("--svg", pr.svg, "Optional chart");
  pareto->add_flag("--no-timestamp", pr.no_timestamp, "Omit the SVG timestamp comment");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (prepare->parsed()) cmd_prepare(pa, out, err);
    if (degrade->parsed()) cmd_degrade(da, out, err);
    if (trainc->parsed()) cmd_train(ta, out, err);
    if (evalc->parsed()) cmd_eval(ea, out, err);
    if (bench->parsed()) cmd_bench(ba, out, err);
    if (entropy->parsed()) cmd_entropy(na, out, err);
    if (pareto->parsed()) cmd_pareto(pr, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace vrae::cli
